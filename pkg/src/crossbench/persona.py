"""Questionnaire records, the persona-crafting instruction, and persona documents."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import PersonaParseError, QuestionnaireError

EXPERIENCE_KEYS = ("impression", "use_case", "emotion", "concern", "expectation")
TRAITS = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")
GENDERS = ("male", "female", "other", "undisclosed")

CRITERIA_LABELS = (
    "Impression of autonomous driving:",
    "Use case of autonomous driving:",
    "Emotion of autonomous driving:",
    "Concern of autonomous driving:",
    "Expectation of autonomous driving:",
)

EXPERIENCE_QUESTIONS = {
    "impression": "What is your impression of autonomous driving?",
    "use_case": "Can you imagine using automated vehicles in your daily life?",
    "emotion": "How does the idea of using automated vehicles make you feel?",
    "concern": "Are there aspects of autonomous driving that you find concerning?",
    "expectation": "What improvements would you hope to see in autonomous vehicles?",
}

DEFAULT_SCENARIO = "street crossing"

_INSTRUCTION_BULLETS = (
    "- Please take the data from Part 1-3 as the base for constructing the corresponding Persona.",
    "- Please retain all demographic information from Part 1.",
    '- Please extract only those elements that are likely to influence perceptions and behaviors '
    'related to autonomous vehicle "in the context of {scenario}" from the personality traits '
    "(Part 2) and open-ended responses (Part 3).",
    "- Please infer each persona's behavioral preferences regarding decision-making.",
    "- Please format the resulting persona into a structured JSON object consisting of three "
    "components: Name, Description, and Decision Criteria.",
)


@dataclass(frozen=True)
class ScenarioContext:
    scenario_label: str = DEFAULT_SCENARIO

    def __post_init__(self):
        if not self.scenario_label.strip():
            raise ValueError("scenario_label must be non-empty")


@dataclass(frozen=True)
class QuestionnaireResponse:
    participant_id: str
    age: int
    gender: str
    nationality: str
    residence_duration: int  # months
    education: str
    occupation: str
    big_five: dict[str, float]
    experience_answers: dict[str, str]
    big_five_scale: str = "unspecified"

    def validate(self) -> None:
        if not str(self.participant_id).strip():
            raise QuestionnaireError("participant_id: must be non-empty")
        if not isinstance(self.age, int) or self.age <= 0:
            raise QuestionnaireError("age: must be a positive integer")
        if self.gender not in GENDERS:
            raise QuestionnaireError(f"gender: must be one of {', '.join(GENDERS)}")
        if not isinstance(self.residence_duration, int) or self.residence_duration < 0:
            raise QuestionnaireError("residence_duration: must be a non-negative integer (months)")
        for trait in TRAITS:
            score = self.big_five.get(trait)
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise QuestionnaireError(f"big_five.{trait}: missing or non-numeric score")
        for key in EXPERIENCE_KEYS:
            answer = self.experience_answers.get(key)
            if not isinstance(answer, str) or not answer.strip():
                raise QuestionnaireError(f"experience_answers.{key}: missing or empty answer")

    @classmethod
    def from_dict(cls, data: dict) -> "QuestionnaireResponse":
        required = (
            "participant_id", "age", "gender", "nationality", "residence_duration",
            "education", "occupation", "big_five", "experience_answers",
        )
        for key in required:
            if key not in data:
                raise QuestionnaireError(f"{key}: missing field")
        resp = cls(
            participant_id=str(data["participant_id"]),
            age=data["age"],
            gender=data["gender"],
            nationality=data["nationality"],
            residence_duration=data["residence_duration"],
            education=data["education"],
            occupation=data["occupation"],
            big_five=dict(data["big_five"]),
            experience_answers=dict(data["experience_answers"]),
            big_five_scale=str(data.get("big_five_scale", "unspecified")),
        )
        resp.validate()
        return resp

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "age": self.age,
            "gender": self.gender,
            "nationality": self.nationality,
            "residence_duration": self.residence_duration,
            "education": self.education,
            "occupation": self.occupation,
            "big_five": dict(self.big_five),
            "big_five_scale": self.big_five_scale,
            "experience_answers": dict(self.experience_answers),
        }


def load_questionnaire(path) -> QuestionnaireResponse:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise QuestionnaireError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise QuestionnaireError(f"{path}: expected a JSON object")
    return QuestionnaireResponse.from_dict(data)


def _serialize_parts(r: QuestionnaireResponse) -> str:
    years, months = divmod(r.residence_duration, 12)
    lines = [
        "Part 1: Demographics",
        f"- Age: {r.age}",
        f"- Gender: {r.gender}",
        f"- Nationality: {r.nationality}",
        f"- Length of residence: {r.residence_duration} months ({years} years {months} months)",
        f"- Education: {r.education}",
        f"- Occupation: {r.occupation}",
        "",
        f"Part 2: Personality (Big Five, scale: {r.big_five_scale})",
    ]
    lines += [f"- {t.capitalize()}: {r.big_five[t]}" for t in TRAITS]
    lines += ["", "Part 3: Experience"]
    for key in EXPERIENCE_KEYS:
        label = key.replace("_", " ").capitalize()
        lines.append(f"- {label}: {EXPERIENCE_QUESTIONS[key]}")
        lines.append(f"  Answer: {r.experience_answers[key].strip()}")
    return "\n".join(lines)


def compose_persona_instruction(
    response: QuestionnaireResponse, ctx: ScenarioContext = ScenarioContext()
) -> str:
    """Build the persona-crafting request: five instruction bullets, then the raw data."""
    response.validate()
    bullets = "\n".join(b.format(scenario=ctx.scenario_label) for b in _INSTRUCTION_BULLETS)
    return f"{bullets}\n\n{_serialize_parts(response)}\n"


# -- persona documents --------------------------------------------------------


@dataclass
class PersonaProfile:
    name: str
    description: str
    decision_criteria: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "decision_criteria": list(self.decision_criteria),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def system_text(self) -> str:
        criteria = "\n".join(f"- {c}" for c in self.decision_criteria)
        return (
            f"You are {self.name}.\n{self.description}\n\n"
            f"Your decision criteria:\n{criteria}"
        )


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def _norm_key(key: str) -> str:
    return re.sub(r"[\s_\-]+", "_", key.strip().lower())


def parse_persona_document(text: str) -> PersonaProfile:
    """Parse a persona JSON document (tolerates code fences and a one-key wrapper)."""
    m = _FENCE_RE.search(text)
    if m:
        text = m.group(1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PersonaParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise PersonaParseError("persona document must be a JSON object")
    if len(data) == 1:
        (inner,) = data.values()
        if isinstance(inner, dict):
            data = inner
    fields_ = {_norm_key(k): v for k, v in data.items()}
    for key in ("name", "description", "decision_criteria"):
        if key not in fields_:
            raise PersonaParseError(f"missing component {key!r}")
    criteria = fields_["decision_criteria"]
    if not isinstance(criteria, list) or not all(isinstance(c, str) for c in criteria):
        raise PersonaParseError("decision_criteria must be a list of strings")
    if len(criteria) != len(CRITERIA_LABELS):
        raise PersonaParseError(
            f"decision_criteria must have {len(CRITERIA_LABELS)} entries, got {len(criteria)}"
        )
    name, desc = fields_["name"], fields_["description"]
    if not isinstance(name, str) or not isinstance(desc, str):
        raise PersonaParseError("name and description must be strings")
    return PersonaProfile(name, desc, list(criteria))


def validate_persona(profile: PersonaProfile) -> list[str]:
    """Return the list of failed structural checks; empty means valid."""
    failures = []
    if not profile.name or not profile.name.strip():
        failures.append("name")
    if not profile.description or not profile.description.strip():
        failures.append("description")
    if len(profile.decision_criteria) != len(CRITERIA_LABELS):
        failures.append("criteria count")
        return failures
    for i, (entry, label) in enumerate(zip(profile.decision_criteria, CRITERIA_LABELS)):
        head = label.split(" of ")[0].lower()
        if not entry.lower().startswith(head) or ":" not in entry:
            failures.append(f"criteria label {i + 1}")
    return failures


def load_persona(path) -> PersonaProfile:
    return parse_persona_document(Path(path).read_text())


def reference_persona(key: str) -> PersonaProfile:
    """One of the bundled reference personas (``test03``, ``test12``, ...)."""
    text = resources.files("crossbench").joinpath("data", "personas", f"{key}.json").read_text()
    return parse_persona_document(text)


def reference_persona_keys() -> list[str]:
    root = resources.files("crossbench").joinpath("data", "personas")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
