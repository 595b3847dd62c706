"""Seeded synthetic inputs: questionnaires, annotation exports and cohorts.

Used for offline pipeline runs and for tests; none of this is field data.
"""

from __future__ import annotations

import zlib

import numpy as np

from .persona import EXPERIENCE_KEYS, TRAITS
from .scenario import DEFAULT_GRID, Condition, GridSpec, enumerate_conditions
from .stats.cohort import CohortDataset, Observation

_ANSWERS = {
    "impression": ["Cautiously positive", "Curious but unsure", "Skeptical"],
    "use_case": ["Commuting to work", "Late-night rides home", "Airport transfers"],
    "emotion": ["Calm", "Slightly nervous", "Excited"],
    "concern": ["Sensor failures in bad weather", "Unclear intent at crossings", "Hacking"],
    "expectation": ["Clear signals to pedestrians", "Fewer accidents", "Smooth traffic"],
}


def participant_ids(n: int) -> list[str]:
    return [f"P{i:02d}" for i in range(1, n + 1)]


def synthetic_questionnaire(participant_id: str, seed: int = 0) -> dict:
    rng = np.random.default_rng([seed, zlib.crc32(participant_id.encode())])
    return {
        "participant_id": participant_id,
        "age": int(rng.integers(19, 45)),
        "gender": str(rng.choice(["male", "female"])),
        "nationality": str(rng.choice(["Japanese", "Chinese", "German", "Korean"])),
        "residence_duration": int(rng.integers(0, 120)),
        "education": str(rng.choice(["Bachelor", "Master", "PhD"])),
        "occupation": "Student",
        "big_five": {t: int(rng.integers(2, 15)) for t in TRAITS},
        "big_five_scale": "2-14",
        "experience_answers": {k: str(rng.choice(_ANSWERS[k])) for k in EXPERIENCE_KEYS},
    }


def synthetic_export(participant: str, condition: Condition, seed: int = 0,
                     grid: GridSpec = DEFAULT_GRID, rate: float = 10.0) -> dict:
    """A walker at a seeded speed who may pause once at a marker before the road.

    Distance is measured from the start marker; the road edge lies one grid
    interval beyond the last marker.
    """
    rng = np.random.default_rng([seed, zlib.crc32(f"{participant}/{condition.dirname}".encode())])
    speed = float(rng.uniform(0.6, 1.3))
    pause_at = int(rng.integers(1, grid.positions)) if rng.random() < 0.6 else None
    pause = float(rng.uniform(1.0, 3.5)) if pause_at is not None else 0.0
    road = grid.span + grid.interval
    markers = []
    for i, m in enumerate(grid.marker_distances):
        t = m / speed + (pause if pause_at is not None and i > pause_at else 0.0)
        markers.append(round(t, 3))
    entry = road / speed + pause
    times = np.arange(0.0, entry + 1.0, 1.0 / rate)

    def dist(t: float) -> float:
        if pause_at is None:
            return min(road, t * speed)
        t_stop = grid.marker_distances[pause_at] / speed
        if t < t_stop:
            return t * speed
        if t < t_stop + pause:
            return grid.marker_distances[pause_at]
        return min(road, (t - pause) * speed)

    return {
        "participant": participant,
        "condition": condition.dirname,
        "markers": markers,
        "road_entry_time": round(entry, 3),
        "samples": [[round(float(t), 3), round(dist(float(t)), 4)] for t in times],
        "likert": {
            "q1_confidence": int(rng.integers(1, 6)),
            "q2_trust": int(rng.integers(1, 6)),
        },
    }


def synthetic_cohort(seed: int, human=(5.07, 1.67), vlm=(5.25, 0.72), n_ids: int = 20,
                     mirror: bool = False, shifts: dict | None = None, upper: float = 9.0) -> CohortDataset:
    """Crossing-time cohort with Normal draws clipped to (0, upper].

    ``mirror`` copies every human value to the matching persona observation,
    so the groups are identical apart from ``shifts`` (condition dirname ->
    seconds added to the persona times in that cell).
    """
    rng = np.random.default_rng(seed)
    shifts = shifts or {}
    lo = 1e-6
    obs = []
    for cond in enumerate_conditions():
        h = np.clip(rng.normal(human[0], human[1], n_ids), lo, upper)
        v = h.copy() if mirror else np.clip(rng.normal(vlm[0], vlm[1], n_ids), lo, upper)
        v = v + shifts.get(cond.dirname, 0.0)
        for pid, a, b in zip(participant_ids(n_ids), h, v):
            obs.append(Observation("human", pid, cond, float(a)))
            obs.append(Observation("vlm", pid, cond, float(b)))
    return CohortDataset(obs)
