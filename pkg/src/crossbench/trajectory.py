"""Human trajectory exports reduced to the simulator's 1-second grid."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError, ValidationError
from .scenario import DEFAULT_GRID, Condition, GridSpec
from .simulator import ACTIONS, next_position

DEFAULT_STOP_THRESHOLD = 0.4  # m/s


@dataclass(frozen=True)
class HumanTrajectory:
    participant: str
    condition: Condition
    samples: tuple[tuple[float, float], ...]
    marker_times: tuple[float, ...]
    road_entry_time: float
    likert: dict | None = None

    def distance_at(self, t: float) -> float:
        ts, ds = zip(*self.samples)
        return float(np.interp(t, ts, ds))


def _check_trajectory(tr: HumanTrajectory, grid: GridSpec) -> None:
    if len(tr.marker_times) != grid.positions:
        raise SchemaError(f"expected {grid.positions} marker times, got {len(tr.marker_times)}")
    if len(tr.samples) < 2:
        raise SchemaError("need at least two samples")
    times = [s[0] for s in tr.samples]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise DataError("sample timestamps must be strictly increasing")
    if any(b < a for a, b in zip(tr.marker_times, tr.marker_times[1:])):
        raise DataError("marker times must be non-decreasing")
    if any(d < 0 or not math.isfinite(d) for _, d in tr.samples):
        raise DataError("distances must be finite and non-negative")
    if not math.isfinite(tr.road_entry_time) or tr.road_entry_time <= 0:
        raise DataError("road_entry_time must be a positive number of seconds")


def parse_annotation_export(source, grid: GridSpec = DEFAULT_GRID) -> HumanTrajectory:
    """Read one annotation export (path, JSON text, or already-decoded dict)."""
    if isinstance(source, dict):
        data = source
    else:
        p = Path(source) if not str(source).lstrip().startswith("{") else None
        try:
            data = json.loads(p.read_text() if p else source)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"export is not valid JSON: {exc}") from exc
    for key in ("participant", "condition", "markers", "road_entry_time", "samples"):
        if key not in data:
            raise SchemaError(f"export lacks {key!r}")
    try:
        cond = Condition.parse(data["condition"])
        samples = tuple((float(t), float(d)) for t, d in data["samples"])
        markers = tuple(float(m) for m in data["markers"])
    except (ValueError, TypeError, KeyError) as exc:
        raise SchemaError(f"malformed export: {exc}") from exc
    tr = HumanTrajectory(
        str(data["participant"]), cond, samples, markers, float(data["road_entry_time"]),
        data.get("likert"),
    )
    _check_trajectory(tr, grid)
    return tr


@dataclass(frozen=True)
class GridEntry:
    time_step: int
    position: int
    action: str


@dataclass(frozen=True)
class GridTrace:
    owner: str
    condition: Condition
    entries: tuple[GridEntry, ...]
    crossing_time: float | None
    group: str = ""

    def to_dict(self) -> dict:
        return {
            "owner": self.owner,
            "group": self.group,
            "condition": self.condition.dirname,
            "entries": [[e.time_step, e.position, e.action] for e in self.entries],
            "crossing_time": self.crossing_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridTrace":
        return cls(
            d["owner"], Condition.parse(d["condition"]),
            tuple(GridEntry(int(t), int(p), a) for t, p, a in d["entries"]),
            d.get("crossing_time"), d.get("group", ""),
        )


def check_trace(trace: GridTrace, grid: GridSpec = DEFAULT_GRID) -> list[str]:
    """List violated GridTrace invariants (empty when the trace is well formed)."""
    problems = []
    entries = trace.entries
    if not entries:
        return ["no entries"]
    if len(entries) > grid.last_step + 1:
        problems.append("more entries than decision points")
    pos = 0
    for i, e in enumerate(entries):
        if e.time_step != i:
            problems.append(f"entry {i}: time_step {e.time_step}")
        if e.action not in ACTIONS:
            problems.append(f"entry {i}: action {e.action!r}")
            break
        if e.position != pos:
            problems.append(f"entry {i}: position {e.position} does not follow from previous step ({pos})")
        if not 0 <= e.position < grid.road:
            problems.append(f"entry {i}: position {e.position} out of range")
        pos = next_position(e.position, e.action, grid)
        if pos == grid.road and i != len(entries) - 1:
            problems.append(f"entry {i}: entries continue after crossing")
    if pos != grid.road and len(entries) != grid.last_step + 1:
        problems.append("trace ends early without crossing")
    return problems


def discretize(traj: HumanTrajectory, stop_threshold: float = DEFAULT_STOP_THRESHOLD,
               grid: GridSpec = DEFAULT_GRID, start_time: float | None = None) -> GridTrace:
    """Sample the trajectory at 1-second ticks and replay it on the grid.

    The true grid index at a tick is the furthest marker reached (or the road
    once the road-entry time has passed).  Each tick the grid position moves
    one step toward that index, unless mean speed over the tick is below
    ``stop_threshold``, which counts as a stop (stepping onto the road and
    falling back behind a marker are always recorded as moves).  Moving at most one step per
    tick keeps the trace a valid simulator path; it can lag a fast walker but
    never gets ahead of them.  ``crossing_time`` is the road-entry time
    rounded up to whole seconds (at least 1).
    """
    t0 = traj.samples[0][0] if start_time is None else start_time
    markers = grid.marker_distances
    dt = grid.decision_period

    def true_index(t: float) -> int:
        if t >= traj.road_entry_time - 1e-9:
            return grid.road
        d = traj.distance_at(t)
        return max(i for i, m in enumerate(markers) if m <= d + 1e-9)

    entries = []
    pos = 0
    for k in range(grid.last_step + 1):
        a, b = t0 + k * dt, t0 + (k + 1) * dt
        target = true_index(b)
        speed = abs(traj.distance_at(b) - traj.distance_at(a)) / dt
        entered = target == grid.road and true_index(a) < grid.road
        if target > pos and (speed >= stop_threshold or entered):
            action = "forward"
        elif target < pos:
            action = "backward"
        else:
            action = "stop"
        entries.append(GridEntry(k, pos, action))
        pos = next_position(pos, action, grid)
        if pos == grid.road:
            break
    ct = max(1, math.ceil(traj.road_entry_time - t0 - 1e-9))
    return GridTrace(traj.participant, traj.condition, tuple(entries), float(ct), "human")


def trace_from_log(log, group: str = "vlm") -> GridTrace:
    entries = tuple(GridEntry(r.time_step, r.position_before, r.action) for r in log.records)
    ct = log.crossing_time
    return GridTrace(log.persona, log.condition, entries, float(ct) if ct is not None else None, group)


def first_wait_position(trace: GridTrace) -> int | None:
    for e in trace.entries:
        if e.action == "stop":
            return e.position
    return None


def never_waited(trace: GridTrace) -> bool:
    return first_wait_position(trace) is None


def validate_trace(trace: GridTrace, grid: GridSpec = DEFAULT_GRID) -> GridTrace:
    problems = check_trace(trace, grid)
    if problems:
        raise ValidationError("; ".join(problems))
    return trace
