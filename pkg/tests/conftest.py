import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from crossbench.oracle import ScriptedOracle, format_decision_reply
from crossbench.persona import reference_persona
from crossbench.scenario import DEFAULT_GRID, load_manifest, make_placeholder_tree
from crossbench.synthetic import participant_ids, synthetic_questionnaire

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.VERDICTS):
        terminalreporter.write_line(acceptance.VERDICTS[n])


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "golden_no_ehmi_stop.json").read_text())


@pytest.fixture(scope="session")
def clip_tree(tmp_path_factory):
    return make_placeholder_tree(tmp_path_factory.mktemp("clips"), DEFAULT_GRID)


@pytest.fixture
def manifest(clip_tree):
    return load_manifest(clip_tree)


@pytest.fixture
def persona():
    return reference_persona("test16")


def scripted_from(golden, ratings=("Rating: 4/5\nReason: steady", "Rating: 2/5\nReason: no signal")):
    replies = [format_decision_reply(s["action"], s["reason"], s["confidence"], s["trust"])
               for s in golden["steps"]]
    return ScriptedOracle(replies, answers=list(ratings))


def write_questionnaires(root: Path, n: int = 20, seed: int = 0) -> list[str]:
    root.mkdir(parents=True, exist_ok=True)
    ids = participant_ids(n)
    for pid in ids:
        (root / f"{pid}.json").write_text(json.dumps(synthetic_questionnaire(pid, seed), indent=2))
    return ids


def walk_export(knots, rate=20, participant="H01", condition="eye_stop"):
    """Annotation export for a piecewise-linear walk through ``knots`` [(t, d), ...]."""
    markers = [i * DEFAULT_GRID.interval for i in range(DEFAULT_GRID.positions)]
    road = DEFAULT_GRID.span + DEFAULT_GRID.interval
    ts, ds = zip(*knots)
    times = np.round(np.arange(0.0, ts[-1] + 1e-9, 1.0 / rate), 6)
    dist = np.interp(times, ts, ds)

    def first_time(d):
        return float(np.interp(d, ds, ts)) if d <= ds[-1] else math.inf

    return {
        "participant": participant,
        "condition": condition,
        "markers": [round(first_time(m), 6) for m in markers],
        "road_entry_time": round(first_time(road), 6),
        "samples": [[float(t), float(d)] for t, d in zip(times, dist)],
    }
