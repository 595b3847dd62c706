"""Per-second crossing decision loop, trial logs, memory and questionnaires."""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    ContractViolation,
    PreconditionError,
    ReplyFormatError,
    TrialError,
    ValidationError,
)
from .oracle import (
    POST_STUDY_QUESTIONS,
    POST_TRIAL_QUESTIONS,
    DecisionQuery,
    Question,
    subsample_frames,
)
from .persona import PersonaProfile
from .scenario import DEFAULT_GRID, ClipManifest, Condition, GridSpec, resolve_clip

ACTIONS = ("forward", "stop", "backward")
COMBINED_VIDEO = "all_agent_see.mp4"
LOG_NAME = "simulation_log.json"

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply with exactly four lines: "
    "'Decision: forward|stop|backward', 'Reason: ...', 'Confidence: N/5 - ...', 'Trust: N/5 - ...'."
)


def render_status(position: int, grid: GridSpec = DEFAULT_GRID) -> str:
    """``o-*-o-o-o-|ROAD`` style marker line; the road index puts ``*`` before ROAD."""
    if isinstance(position, bool) or not isinstance(position, int) or not 0 <= position <= grid.road:
        raise ContractViolation(f"position {position!r} outside 0..{grid.road}")
    if position == grid.road:
        return "-".join("o" * grid.positions) + "-|*ROAD"
    cells = ["o"] * grid.positions
    cells[position] = "*"
    return "-".join(cells) + "-|ROAD"


@dataclass(frozen=True)
class DecisionRecord:
    time_step: int
    position_before: int
    action: str
    reason: str
    confidence: int
    trust: int
    position_after: int
    status_string: str
    clip: str = ""
    frames: int = 0

    def summary_line(self) -> str:
        return (
            f"Time {self.time_step}: {self.status_string} "
            f"(moved from {self.position_before} to {self.position_after} - {self.action})"
        )

    def to_dict(self) -> dict:
        return {
            "time_step": self.time_step,
            "position_before": self.position_before,
            "action": self.action,
            "reason": self.reason,
            "confidence": self.confidence,
            "trust": self.trust,
            "position_after": self.position_after,
            "status": self.status_string,
            "clip": self.clip,
            "frames": self.frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionRecord":
        return cls(
            d["time_step"], d["position_before"], d["action"], d.get("reason", ""),
            d["confidence"], d["trust"], d["position_after"], d["status"],
            d.get("clip", ""), d.get("frames", 0),
        )


@dataclass(frozen=True)
class SimState:
    position: int = 0
    time_step: int = 0
    history: tuple[DecisionRecord, ...] = ()


def next_position(position: int, action: str, grid: GridSpec = DEFAULT_GRID) -> int:
    if action == "forward":
        return position + 1
    if action == "backward":
        return max(position - 1, 0)
    if action == "stop":
        return position
    raise ContractViolation(f"unknown action {action!r}")


def apply_action(state: SimState, action: str, *, reason: str = "", confidence: int = 3,
                 trust: int = 3, clip: str = "", frames: int = 0,
                 grid: GridSpec = DEFAULT_GRID) -> SimState:
    if state.position >= grid.road:
        raise ContractViolation("trial already over: agent is on the road")
    if state.time_step > grid.last_step:
        raise ContractViolation(f"time step {state.time_step} beyond the last decision point")
    after = next_position(state.position, action, grid)
    rec = DecisionRecord(
        state.time_step, state.position, action, reason, confidence, trust,
        after, render_status(after, grid), clip, frames,
    )
    return SimState(after, state.time_step + 1, state.history + (rec,))


_LINE_RE = {
    "decision": re.compile(r"^\W*decision\W*:\s*(.+)$", re.I | re.M),
    "reason": re.compile(r"^\W*reason\W*:\s*(.*)$", re.I | re.M),
    "confidence": re.compile(r"^\W*confidence\W*:\s*(.*)$", re.I | re.M),
    "trust": re.compile(r"^\W*trust\W*:\s*(.*)$", re.I | re.M),
}
_RATING_RE = re.compile(r"^\s*(\d+)\s*/\s*5\b")


def parse_rating(text: str, label: str = "rating") -> int:
    m = _RATING_RE.match(text)
    if not m:
        raise ReplyFormatError(f"{label}: expected 'N/5', got {text.strip()[:40]!r}")
    value = int(m.group(1))
    if not 1 <= value <= 5:
        raise ReplyFormatError(f"{label}: {value}/5 is outside 1..5")
    return value


def parse_decision_reply(text: str) -> tuple[str, str, int, int]:
    found = {}
    for key, rx in _LINE_RE.items():
        m = rx.search(text)
        if not m:
            raise ReplyFormatError(f"reply has no '{key.capitalize()}:' line")
        found[key] = m.group(1).strip()
    action = found["decision"].strip().strip("*.").lower()
    if action not in ACTIONS:
        raise ReplyFormatError(f"decision {found['decision']!r} is not one of {', '.join(ACTIONS)}")
    return (
        action,
        found["reason"],
        parse_rating(found["confidence"], "confidence"),
        parse_rating(found["trust"], "trust"),
    )


@dataclass(frozen=True)
class RetryPolicy:
    parse_retries: int = 3
    reminder: str = FORMAT_REMINDER


# -- memory ------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryEntry:
    time_step: int
    status: str
    clip: str
    action: str
    reason: str
    confidence: int
    trust: int
    frame: str = ""


@dataclass(frozen=True)
class Memory:
    persona: str
    condition: Condition
    timeline: tuple[MemoryEntry, ...]
    summary: tuple[str, ...]
    combined_video: str
    root: str = ""

    def text(self) -> str:
        lines = [f"Condition: {self.condition.dirname}"]
        for e in self.timeline:
            lines.append(f"Time {e.time_step}: saw {e.clip}; status {e.status}; decided {e.action} ({e.reason})")
        lines.append("")
        lines.append("=== All Position Status Summary ===")
        lines.extend(self.summary)
        lines.append("")
        lines.append(f"Combined video saved to: {self.combined_video}")
        return "\n".join(lines)

    def representative_frames(self) -> tuple[Path, ...]:
        return tuple(Path(self.root) / e.frame for e in self.timeline if e.frame)

    def to_dict(self) -> dict:
        return {
            "timeline": [e.__dict__ for e in self.timeline],
            "summary": list(self.summary),
            "combined_video": self.combined_video,
        }


# -- trial log -----------------------------------------------------------------


@dataclass
class TrialLog:
    persona: str
    condition: Condition
    records: list[DecisionRecord]
    trial_index: int = 1
    seed: int = 0
    oracle: dict = field(default_factory=dict)
    ratings: dict = field(default_factory=dict)
    memory: Memory | None = None
    valid: bool = True
    error: str = ""

    @property
    def crossed(self) -> bool:
        return crossing_time(self) is not None

    @property
    def crossing_time(self) -> int | None:
        return crossing_time(self)

    @property
    def trial_dir(self) -> str:
        return f"{self.persona}/{self.trial_index}_{self.condition.dirname}"

    def summary_lines(self) -> list[str]:
        return [r.summary_line() for r in self.records]

    def to_dict(self) -> dict:
        return {
            "persona": self.persona,
            "condition": self.condition.to_dict(),
            "trial_index": self.trial_index,
            "seed": self.seed,
            "oracle": self.oracle,
            "valid": self.valid,
            "error": self.error,
            "records": [r.to_dict() for r in self.records],
            "summary": self.summary_lines(),
            "crossed": self.crossed,
            "crossing_time": self.crossing_time,
            "ratings": self.ratings,
            "memory": self.memory.to_dict() if self.memory else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrialLog":
        cond = Condition.parse(d["condition"])
        log = cls(
            persona=d["persona"],
            condition=cond,
            records=[DecisionRecord.from_dict(r) for r in d["records"]],
            trial_index=d.get("trial_index", 1),
            seed=d.get("seed", 0),
            oracle=d.get("oracle", {}),
            ratings=d.get("ratings", {}),
            valid=d.get("valid", True),
            error=d.get("error", ""),
        )
        mem = d.get("memory")
        if mem:
            log.memory = Memory(
                log.persona, cond,
                tuple(MemoryEntry(**e) for e in mem["timeline"]),
                tuple(mem["summary"]), mem["combined_video"],
            )
        return log


def load_trial_log(path) -> TrialLog:
    return TrialLog.from_dict(json.loads(Path(path).read_text()))


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def crossing_time(log: TrialLog, grid: GridSpec = DEFAULT_GRID) -> int | None:
    """Second during which the agent steps from the last marker onto the road."""
    for rec in log.records:
        if rec.position_before == grid.road - 1 and rec.action == "forward":
            return rec.time_step + 1
    return None


def assemble_memory(log: TrialLog, root: str = "") -> Memory:
    if not log.records:
        raise ValidationError("trial log has no decision records")
    timeline = tuple(
        MemoryEntry(
            r.time_step, r.status_string, r.clip, r.action, r.reason, r.confidence, r.trust,
            f"{log.trial_dir}/step_views/step{r.time_step}_pos{r.position_before}.jpg" if r.frames else "",
        )
        for r in log.records
    )
    return Memory(
        log.persona, log.condition, timeline, tuple(log.summary_lines()),
        f"{log.trial_dir}/{COMBINED_VIDEO}", root,
    )


def _ask_rating(oracle, profile, question: Question, memories, retry: RetryPolicy) -> tuple[int, str]:
    last = None
    for _ in range(retry.parse_retries + 1):
        reply = oracle.ask(profile, question, memories)
        m = re.search(r"rating\W*:\s*(.*)$", reply, re.I | re.M)
        try:
            if not m:
                raise ReplyFormatError(f"{question.key}: no 'Rating:' line")
            value = parse_rating(m.group(1), question.key)
        except ReplyFormatError as exc:
            last = exc
            continue
        rm = re.search(r"reason\W*:\s*(.*)$", reply, re.I | re.M | re.S)
        return value, (rm.group(1).strip() if rm else "")
    raise last


def _ask_text(oracle, profile, question: Question, memories, retry: RetryPolicy) -> str:
    for _ in range(retry.parse_retries + 1):
        reply = oracle.ask(profile, question, memories)
        m = re.search(r"answer\W*:\s*(.*)", reply, re.I | re.S)
        text = (m.group(1) if m else reply).strip()
        if text:
            return text
    raise ReplyFormatError(f"{question.key}: empty answer")


def administer_post_trial(profile: PersonaProfile, memory: Memory, oracle,
                          retry: RetryPolicy = RetryPolicy()) -> dict:
    """Ask the two per-trial ratings; returns ratings plus the printed reasons."""
    if memory is None or not memory.timeline:
        raise PreconditionError("post-trial questions need an assembled memory")
    out = {}
    for q in POST_TRIAL_QUESTIONS:
        value, reason = _ask_rating(oracle, profile, q, (memory,), retry)
        out[q.key] = value
        out[q.key + "_reason"] = reason
    return out


@dataclass(frozen=True)
class InterviewAnswers:
    q1_similarity: int
    q2_genuineness: int
    q3_acceptance: int
    q4_helpfulness: int
    q5_eye_meaning: str
    q6_light_meaning: str
    q7_no_ehmi_strategy: str

    def __post_init__(self):
        for key in ("q1_similarity", "q2_genuineness", "q3_acceptance", "q4_helpfulness"):
            if not 1 <= getattr(self, key) <= 5:
                raise ValidationError(f"{key} outside 1..5")
        for key in ("q5_eye_meaning", "q6_light_meaning", "q7_no_ehmi_strategy"):
            if not getattr(self, key).strip():
                raise ValidationError(f"{key} is empty")

    def likert(self) -> dict:
        return {k: getattr(self, k) for k in ("q1_similarity", "q2_genuineness", "q3_acceptance", "q4_helpfulness")}


def administer_post_study(profile: PersonaProfile, memories: dict, oracle, order,
                          retry: RetryPolicy = RetryPolicy()) -> InterviewAnswers:
    """Present all six memories in the participant's trial order, then ask the interview."""
    order = list(order)
    missing = [c.dirname for c in order if c not in memories]
    if missing or len(order) != 6:
        raise PreconditionError(f"post-study interview needs six trial memories; missing {missing}")
    ordered = tuple(memories[c] for c in order)
    answers = {}
    for q in POST_STUDY_QUESTIONS:
        if q.kind == "likert":
            answers[q.key] = _ask_rating(oracle, profile, q, ordered, retry)[0]
        else:
            answers[q.key] = _ask_text(oracle, profile, q, ordered, retry)
    return InterviewAnswers(**answers)


# -- the trial loop --------------------------------------------------------------


def _query(oracle, query: DecisionQuery, retry: RetryPolicy):
    last = None
    for attempt in range(retry.parse_retries + 1):
        q = query if attempt == 0 else replace(query, reminder=retry.reminder)
        reply = oracle.decide(q)
        try:
            return parse_decision_reply(reply)
        except ReplyFormatError as exc:
            last = exc
    raise last


def run_trial(profile: PersonaProfile, condition: Condition, oracle, manifest: ClipManifest,
              retry: RetryPolicy = RetryPolicy(), seed: int = 0, trial_index: int = 1,
              out_dir=None, post_trial: bool = True) -> TrialLog:
    """Run one persona through one condition, t = 0..last_step, stopping on crossing.

    With ``out_dir`` the log, per-step views and memory land in
    ``<out_dir>/<persona>/<index>_<condition>/``.  Oracle transport failures
    propagate; replies that never parse raise :class:`TrialError`.
    """
    grid = manifest.grid
    cfg = getattr(oracle, "config", None)
    meta = cfg.describe() if cfg else {}
    log = TrialLog(profile.name, condition, [], trial_index, seed, meta)
    state = SimState()
    for t in range(grid.last_step + 1):
        clip = resolve_clip(manifest, condition, state.position, t)
        frames = clip.frames
        query = DecisionQuery(
            profile, frames, render_status(state.position, grid), state.history,
            condition, state.position, t,
        )
        try:
            action, reason, conf, trust = _query(oracle, query, retry)
        except ReplyFormatError as exc:
            log.records = list(state.history)
            log.valid, log.error = False, f"time step {t}: {exc}"
            raise TrialError(log.error, log) from exc
        state = apply_action(state, action, reason=reason, confidence=conf, trust=trust,
                             clip=clip.relpath, frames=len(frames), grid=grid)
        if state.position == grid.road:
            break
    log.records = list(state.history)
    log.memory = assemble_memory(log, str(out_dir) if out_dir else "")
    if out_dir is not None:
        _write_step_views(log, manifest, Path(out_dir))
    if post_trial:
        try:
            log.ratings = administer_post_trial(profile, log.memory, oracle, retry)
        except ReplyFormatError as exc:
            log.valid, log.error = False, f"post-trial questionnaire: {exc}"
            raise TrialError(log.error, log) from exc
    if out_dir is not None:
        atomic_write(Path(out_dir) / log.trial_dir / LOG_NAME, log.to_json())
    return log


def _write_step_views(log: TrialLog, manifest: ClipManifest, out: Path) -> None:
    views = out / log.trial_dir / "step_views"
    views.mkdir(parents=True, exist_ok=True)
    for rec in log.records:
        ref = resolve_clip(manifest, log.condition, rec.position_before, rec.time_step)
        if ref.frames:
            mid = subsample_frames(ref.frames, 3)[len(subsample_frames(ref.frames, 3)) // 2]
            shutil.copyfile(mid, views / f"step{rec.time_step}_pos{rec.position_before}.jpg")
    listing = "".join(f"file '{(manifest.root / r.clip).resolve()}'\n" for r in log.records)
    (out / log.trial_dir / "all_agent_see.txt").write_text(listing)


# -- replay ------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayVerdict:
    passed: bool
    steps: int
    divergence: str = ""
    crossing_time: int | None = None


def replay_log(data: dict, grid: GridSpec = DEFAULT_GRID) -> ReplayVerdict:
    """Re-run the state machine on the logged actions and check every derived field."""
    records = data.get("records") or []
    if not records:
        return ReplayVerdict(False, 0, "log has no records")
    state = SimState()
    summary = data.get("summary", [])
    for i, rec in enumerate(records):
        t = rec.get("time_step")
        if t != state.time_step:
            return ReplayVerdict(False, i, f"record {i}: time_step {t} != expected {state.time_step}")
        if rec.get("position_before") != state.position:
            return ReplayVerdict(False, i, f"time {t}: position_before {rec.get('position_before')} != {state.position}")
        try:
            state = apply_action(state, rec.get("action"), grid=grid)
        except ContractViolation as exc:
            return ReplayVerdict(False, i, f"time {t}: {exc}")
        expect = state.history[-1]
        if rec.get("position_after") != expect.position_after:
            return ReplayVerdict(False, i, f"time {t}: position_after {rec.get('position_after')} != {expect.position_after}")
        if rec.get("status") != expect.status_string:
            return ReplayVerdict(False, i, f"time {t}: status {rec.get('status')!r} != {expect.status_string!r}")
        if i >= len(summary) or summary[i] != expect.summary_line():
            got = summary[i] if i < len(summary) else None
            return ReplayVerdict(False, i, f"time {t}: summary {got!r} != {expect.summary_line()!r}")
    if len(summary) != len(records):
        return ReplayVerdict(False, len(records), f"{len(summary)} summary lines for {len(records)} records")
    crossed = state.position == grid.road
    if not crossed and len(records) != grid.last_step + 1:
        return ReplayVerdict(False, len(records), "trial ended early without crossing")
    ct = state.time_step if crossed else None
    if data.get("crossed") is not None and data["crossed"] != crossed:
        return ReplayVerdict(False, len(records), f"crossed flag {data['crossed']} != {crossed}")
    if "crossing_time" in data and data["crossing_time"] != ct:
        return ReplayVerdict(False, len(records), f"crossing_time {data['crossing_time']} != {ct}")
    return ReplayVerdict(True, len(records), "", ct)
