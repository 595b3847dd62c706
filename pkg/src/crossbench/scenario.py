"""Experimental conditions, grid constants, clip lookup and trial ordering."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ManifestError

EHMI_TYPES = ("light_strip", "eyes", "none")
AV_BEHAVIORS = ("stop", "pass")

_EHMI_DIR = {"light_strip": "light", "eyes": "eye", "none": "no-ehmi"}
_DIR_EHMI = {v: k for k, v in _EHMI_DIR.items()}

_CLIP_RE = re.compile(r"^pos(\d+)_time(\d+)\.mp4$")


@dataclass(frozen=True, order=True)
class Condition:
    ehmi: str
    av_behavior: str

    def __post_init__(self):
        if self.ehmi not in EHMI_TYPES:
            raise ValueError(f"unknown eHMI type {self.ehmi!r}")
        if self.av_behavior not in AV_BEHAVIORS:
            raise ValueError(f"unknown AV behavior {self.av_behavior!r}")

    @property
    def dirname(self) -> str:
        return f"{_EHMI_DIR[self.ehmi]}_{self.av_behavior}"

    @classmethod
    def from_dirname(cls, name: str) -> "Condition":
        prefix, _, behavior = name.rpartition("_")
        if prefix not in _DIR_EHMI:
            raise ValueError(f"unknown condition directory {name!r}")
        return cls(_DIR_EHMI[prefix], behavior)

    @classmethod
    def parse(cls, value) -> "Condition":
        """Accept a Condition, a directory name, or an ``{ehmi, av_behavior}`` mapping."""
        if isinstance(value, Condition):
            return value
        if isinstance(value, str):
            return cls.from_dirname(value)
        if isinstance(value, dict):
            av = value.get("av_behavior", value.get("av"))
            return cls(value["ehmi"], av)
        if isinstance(value, (tuple, list)) and len(value) == 2:
            return cls(*value)
        raise ValueError(f"cannot interpret {value!r} as a condition")

    def to_dict(self) -> dict:
        return {"ehmi": self.ehmi, "av_behavior": self.av_behavior, "dir": self.dirname}

    def __str__(self) -> str:
        return self.dirname


def enumerate_conditions() -> list[Condition]:
    """All six conditions in canonical order (light, eyes, none) x (stop, pass)."""
    return [Condition(e, a) for e in EHMI_TYPES for a in AV_BEHAVIORS]


@dataclass(frozen=True)
class GridSpec:
    positions: int = 5
    interval: float = 0.8
    span: float = 3.2
    approach_duration: float = 8.0
    decision_period: float = 1.0

    def __post_init__(self):
        if abs(self.interval * (self.positions - 1) - self.span) > 1e-9:
            raise ValueError("interval * (positions - 1) must equal span")
        steps = self.approach_duration / self.decision_period
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("approach_duration must be a whole number of decision periods")

    @property
    def road(self) -> int:
        """Grid index meaning "on the road"."""
        return self.positions

    @property
    def last_step(self) -> int:
        return int(round(self.approach_duration / self.decision_period))

    @property
    def marker_distances(self) -> list[float]:
        return [i * self.interval for i in range(self.positions)]

    def required_pairs(self) -> list[tuple[int, int]]:
        """(position, time_step) pairs the simulator can reach."""
        return [
            (p, t)
            for p in range(self.positions)
            for t in range(self.last_step + 1)
            if p <= t
        ]


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True)
class ClipRef:
    root: Path
    condition: Condition
    position: int
    time_step: int
    frames: tuple[Path, ...] = ()
    frames_root: Path | None = None

    @property
    def relpath(self) -> str:
        return f"{self.condition.dirname}/split/pos{self.position}_time{self.time_step}.mp4"

    @property
    def path(self) -> Path:
        return self.root / self.relpath

    @property
    def frames_dir(self) -> Path:
        """``<clip>.frames`` next to the clip, or under ``frames_root`` when set."""
        if self.frames_root is not None:
            return frames_dir_for(self.frames_root / self.relpath)
        return frames_dir_for(self.path)


def frames_dir_for(clip: Path) -> Path:
    return clip.with_name(clip.name + ".frames")


def frames_in(d: Path) -> list[Path]:
    if not d.is_dir():
        return []
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".jpg", ".jpeg", ".png"))


def list_frames(clip: Path) -> list[Path]:
    return frames_in(frames_dir_for(clip))


@dataclass
class ClipManifest:
    root: Path
    grid: GridSpec
    entries: dict[tuple[Condition, int, int], ClipRef]
    pending: list[ClipRef] = field(default_factory=list)

    def conditions(self) -> list[Condition]:
        return sorted({key[0] for key in self.entries})

    def frame_counts(self) -> dict[str, int]:
        return {ref.relpath: len(ref.frames) for ref in self.entries.values()}

    def refresh_frames(self) -> None:
        """Re-discover frame lists (after extraction) and validate they are non-empty."""
        problems = []
        for key, ref in list(self.entries.items()):
            frames = tuple(frames_in(ref.frames_dir))
            self.entries[key] = replace(ref, frames=frames)
            if not frames:
                problems.append(f"{ref.relpath}: zero frames")
        self.pending = []
        if problems:
            raise ManifestError(problems)

    def to_json(self) -> dict:
        return {
            "root": str(self.root),
            "grid": self.grid.__dict__,
            "clips": {
                ref.relpath: {
                    "condition": ref.condition.dirname,
                    "position": ref.position,
                    "time_step": ref.time_step,
                    "frames": len(ref.frames),
                }
                for ref in sorted(self.entries.values(), key=lambda r: r.relpath)
            },
        }

    def write_cache(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def load_manifest(root, grid: GridSpec = DEFAULT_GRID, frames_root=None) -> ClipManifest:
    """Scan a clip tree and validate it against ``grid``.

    Every missing condition directory and every missing split clip is
    collected before raising, so one error lists the whole gap.  Clips whose
    ``.frames`` directory does not exist yet are returned in
    ``manifest.pending`` for extraction; an existing but empty frame
    directory is an error.  With ``frames_root`` a mirrored frame tree there
    is consulted when the clip has no adjacent frames, and pending clips are
    scheduled for extraction into it, leaving the clip tree untouched.
    """
    frames_root = Path(frames_root) if frames_root is not None else None
    root = Path(root)
    if not root.is_dir():
        raise ManifestError([f"{root}: not a directory"])
    problems: list[str] = []
    entries: dict[tuple[Condition, int, int], ClipRef] = {}
    pending: list[ClipRef] = []
    for cond in enumerate_conditions():
        split = root / cond.dirname / "split"
        if not (root / cond.dirname).is_dir():
            problems.append(f"missing condition directory {cond.dirname}")
            continue
        for p, t in grid.required_pairs():
            ref = ClipRef(root, cond, p, t)
            clip = split / f"pos{p}_time{t}.mp4"
            if not clip.is_file():
                problems.append(f"missing clip {ref.relpath}")
                continue
            fdir = frames_dir_for(clip)
            if not fdir.is_dir() and frames_root is not None:
                ref = ClipRef(root, cond, p, t, (), frames_root)
                fdir = ref.frames_dir
            if fdir.is_dir():
                frames = tuple(frames_in(fdir))
                if not frames:
                    problems.append(f"{ref.relpath}: zero frames")
                ref = replace(ref, frames=frames)
            else:
                pending.append(ref)
            entries[(cond, p, t)] = ref
    if problems:
        raise ManifestError(problems)
    return ClipManifest(root, grid, entries, pending)


def resolve_clip(manifest: ClipManifest, condition: Condition, position: int, time_step: int) -> ClipRef:
    try:
        return manifest.entries[(condition, position, time_step)]
    except KeyError:
        raise ManifestError(
            [f"no clip for ({condition.dirname}, position {position}, time {time_step})"]
        ) from None


def make_placeholder_tree(root, grid: GridSpec = DEFAULT_GRID, frames_per_clip: int = 1) -> Path:
    """Write a clip tree with stub clips and stub frames, for offline mock runs."""
    root = Path(root)
    for cond in enumerate_conditions():
        split = root / cond.dirname / "split"
        split.mkdir(parents=True, exist_ok=True)
        for p, t in grid.required_pairs():
            clip = split / f"pos{p}_time{t}.mp4"
            clip.write_bytes(b"")
            fdir = frames_dir_for(clip)
            fdir.mkdir(exist_ok=True)
            for i in range(1, frames_per_clip + 1):
                (fdir / f"{i:03d}.jpg").write_bytes(b"\xff\xd8\xff\xd9")
    return root


# -- counterbalancing ---------------------------------------------------------


def williams_square(n: int) -> list[list[int]]:
    """Balanced Latin square for an even number of treatments.

    First row is 0, 1, n-1, 2, n-2, ...; later rows add the row index mod n.
    """
    if n < 1:
        return []
    first, lo, hi = [0], 1, n - 1
    while len(first) < n:
        first.append(lo)
        lo += 1
        if len(first) < n:
            first.append(hi)
            hi -= 1
    return [[(x + r) % n for x in first] for r in range(n)]


@dataclass(frozen=True)
class TrialPlan:
    participant: str
    conditions: tuple[Condition, ...]
    practice: bool = False

    def __post_init__(self):
        if sorted(self.conditions) != sorted(enumerate_conditions()):
            raise ValueError("a trial plan must contain each condition exactly once")


def build_trial_orders(n: int, ids: list[str] | None = None, practice: bool = False) -> list[TrialPlan]:
    """Assign Williams-square rows cyclically to ``n`` participants."""
    if n <= 0:
        return []
    ids = list(ids) if ids is not None else [f"P{i + 1:02d}" for i in range(n)]
    if len(ids) != n:
        raise ValueError("ids must have length n")
    conds = enumerate_conditions()
    square = williams_square(len(conds))
    return [
        TrialPlan(pid, tuple(conds[j] for j in square[i % len(square)]), practice)
        for i, pid in enumerate(ids)
    ]
