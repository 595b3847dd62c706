import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossbench.errors import PersonaParseError, QuestionnaireError
from crossbench.persona import (
    CRITERIA_LABELS,
    PersonaProfile,
    QuestionnaireResponse,
    ScenarioContext,
    compose_persona_instruction,
    load_questionnaire,
    parse_persona_document,
    reference_persona,
    reference_persona_keys,
    validate_persona,
)

REFERENCE_NAMES = {"test03": "G2x02v", "test12": "G4x01v", "test14": "G4x03v", "test15": "G3x02g", "test16": "G3x03g"}


def questionnaire(**overrides):
    data = {
        "participant_id": "G3x03g",
        "age": 21,
        "gender": "male",
        "nationality": "Brazilian",
        "residence_duration": 8,
        "education": "Bachelor",
        "occupation": "Student",
        "big_five": {"openness": 12, "conscientiousness": 9, "extraversion": 13,
                     "agreeableness": 10, "neuroticism": 6},
        "big_five_scale": "2-14",
        "experience_answers": {
            "impression": "Looks promising",
            "use_case": "Getting around town",
            "emotion": "Happy",
            "concern": "Malfunctions",
            "expectation": "Full autonomy",
        },
    }
    data.update(overrides)
    return data


def test_reference_keys_are_the_five_bundled_profiles():
    assert reference_persona_keys() == sorted(REFERENCE_NAMES)


@pytest.mark.parametrize("key,name", sorted(REFERENCE_NAMES.items()))
def test_reference_profiles_parse_and_validate(key, name):
    p = reference_persona(key)
    assert p.name == name
    assert len(p.decision_criteria) == 5
    assert validate_persona(p) == []
    for entry, label in zip(p.decision_criteria, CRITERIA_LABELS):
        assert entry.startswith(label)


def test_test16_description_mentions_age():
    assert "21" in reference_persona("test16").description


@pytest.mark.parametrize("key", sorted(REFERENCE_NAMES))
def test_round_trip_is_identity(key):
    p = reference_persona(key)
    assert parse_persona_document(p.to_json()) == p


def test_missing_criteria_is_structural_error():
    doc = json.dumps({"name": "x", "description": "y"})
    with pytest.raises(PersonaParseError, match="decision_criteria"):
        parse_persona_document(doc)


def test_wrong_criteria_count_is_structural_error():
    crit = [f"{label} ok" for label in CRITERIA_LABELS[:4]]
    with pytest.raises(PersonaParseError, match="5 entries"):
        parse_persona_document(json.dumps({"name": "x", "description": "y", "decision_criteria": crit}))


def test_parse_accepts_code_fence_and_wrapper():
    p = reference_persona("test03")
    fenced = "Here you go:\n```json\n" + json.dumps({"persona": p.to_dict()}) + "\n```"
    assert parse_persona_document(fenced) == p


def test_parse_rejects_non_json():
    with pytest.raises(PersonaParseError):
        parse_persona_document("not json at all")


def test_validate_reports_each_failure():
    good = reference_persona("test12")
    four = PersonaProfile(good.name, good.description, good.decision_criteria[:4])
    assert validate_persona(four) == ["criteria count"]
    unnamed = PersonaProfile("", good.description, list(good.decision_criteria))
    assert validate_persona(unnamed) == ["name"]


def test_instruction_contains_bullets_and_demographics():
    resp = QuestionnaireResponse.from_dict(questionnaire())
    text = compose_persona_instruction(resp)
    assert 'in the context of street crossing' in text
    assert "Please infer each persona's behavioral preferences regarding decision-making." in text
    assert text.count("\n- Please") + text.startswith("- Please") == 5
    for fragment in ("Age: 21", "Gender: male", "Nationality: Brazilian", "8 months",
                     "Education: Bachelor", "Occupation: Student", "Openness: 12", "scale: 2-14"):
        assert fragment in text


def test_instruction_scenario_substitution():
    resp = QuestionnaireResponse.from_dict(questionnaire())
    text = compose_persona_instruction(resp, ScenarioContext("sidewalk robot encounter"))
    bullet3 = text.splitlines()[2]
    assert "in the context of sidewalk robot encounter" in bullet3
    assert "street crossing" not in text


def test_instruction_is_pure():
    resp = QuestionnaireResponse.from_dict(questionnaire())
    assert compose_persona_instruction(resp) == compose_persona_instruction(resp)


def test_empty_experience_answer_names_key():
    answers = dict(questionnaire()["experience_answers"], concern="  ")
    with pytest.raises(QuestionnaireError, match="concern"):
        QuestionnaireResponse.from_dict(questionnaire(experience_answers=answers))


def test_missing_experience_key_names_key():
    answers = dict(questionnaire()["experience_answers"])
    del answers["expectation"]
    with pytest.raises(QuestionnaireError, match="expectation"):
        QuestionnaireResponse.from_dict(questionnaire(experience_answers=answers))


@pytest.mark.parametrize("field,value,needle", [
    ("age", 0, "age"),
    ("residence_duration", -1, "residence_duration"),
    ("gender", "robot", "gender"),
    ("big_five", {"openness": 1}, "conscientiousness"),
])
def test_questionnaire_invariants(field, value, needle):
    with pytest.raises(QuestionnaireError, match=needle):
        QuestionnaireResponse.from_dict(questionnaire(**{field: value}))


def test_load_questionnaire_rejects_bad_json(tmp_path):
    path = tmp_path / "q.json"
    path.write_text("{nope")
    with pytest.raises(QuestionnaireError, match="not valid JSON"):
        load_questionnaire(path)


label_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@given(name=st.text(min_size=1, max_size=20), desc=label_text, tails=st.lists(label_text, min_size=5, max_size=5))
def test_serialize_parse_identity(name, desc, tails):
    p = PersonaProfile(name, desc, [f"{label} {t}" for label, t in zip(CRITERIA_LABELS, tails)])
    assert parse_persona_document(p.to_json()) == p
