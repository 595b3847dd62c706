"""Merge simulation logs and human annotation exports into one cohort dataset."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SchemaError, ValidationError
from .scenario import DEFAULT_GRID, GridSpec
from .simulator import LOG_NAME, load_trial_log
from .stats.cohort import STUDY_LIKERT, TRIAL_LIKERT, CohortDataset, Interview, Observation
from .trajectory import DEFAULT_STOP_THRESHOLD, discretize, parse_annotation_export, trace_from_log

INTERVIEW_NAME = "interview.json"


def collect_simulations(root, grid: GridSpec = DEFAULT_GRID):
    """Observations, traces and interviews from every valid ``simulation_log.json`` under ``root``."""
    root = Path(root)
    obs, traces, interviews, notices = [], [], [], []
    for path in sorted(root.rglob(LOG_NAME)):
        log = load_trial_log(path)
        if not log.valid:
            notices.append(f"skipped invalid trial {path.relative_to(root)}: {log.error}")
            continue
        ct = log.crossing_time
        likert = {k: log.ratings[k] for k in TRIAL_LIKERT if k in log.ratings}
        obs.append(Observation("vlm", log.persona, log.condition, None if ct is None else float(ct), likert))
        traces.append(trace_from_log(log, "vlm"))
    for path in sorted(root.rglob(INTERVIEW_NAME)):
        data = json.loads(path.read_text())
        interviews.append(Interview("vlm", data["persona"], {k: data["answers"][k] for k in STUDY_LIKERT}))
    return obs, traces, interviews, notices


def load_human_interviews(path) -> list[Interview]:
    """A JSON list of ``{"participant": ..., "q1_similarity": ..., ...}`` records."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise SchemaError("human interview file must hold a JSON list")
    out = []
    for row in data:
        try:
            out.append(Interview("human", str(row["participant"]), {k: int(row[k]) for k in STUDY_LIKERT}))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad interview record {row!r}: {exc}") from exc
    return out


def collect_exports(root, stop_threshold: float = DEFAULT_STOP_THRESHOLD, grid: GridSpec = DEFAULT_GRID):
    """Observations and grid traces from every ``*.json`` annotation export under ``root``."""
    obs, traces, notices = [], [], []
    for path in sorted(Path(root).rglob("*.json")):
        try:
            tr = parse_annotation_export(path, grid)
        except ValidationError as exc:
            notices.append(f"skipped export {path.name}: {exc}")
            continue
        trace = discretize(tr, stop_threshold, grid)
        likert = {k: tr.likert[k] for k in TRIAL_LIKERT if tr.likert and k in tr.likert}
        obs.append(Observation("human", tr.participant, tr.condition, trace.crossing_time, likert))
        traces.append(trace)
    return obs, traces, notices


def build_dataset(sim_dirs=(), export_dirs=(), human_interviews=None,
                  stop_threshold: float = DEFAULT_STOP_THRESHOLD,
                  grid: GridSpec = DEFAULT_GRID) -> tuple[CohortDataset, list[str]]:
    obs, traces, interviews, notices = [], [], [], []
    for d in sim_dirs:
        o, t, i, n = collect_simulations(d, grid)
        obs += o
        traces += t
        interviews += i
        notices += n
    for d in export_dirs:
        o, t, n = collect_exports(d, stop_threshold, grid)
        obs += o
        traces += t
        notices += n
    if human_interviews:
        interviews += load_human_interviews(human_interviews)
    return CohortDataset(obs, traces, interviews, grid), notices
