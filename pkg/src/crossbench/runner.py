"""Batch orchestration: persona building and the six-trial simulation per persona."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import RunConfig
from .errors import (
    ConfigError,
    ExtractionError,
    OracleUnavailable,
    PersonaGenerationError,
    QuestionnaireError,
    TrialError,
    ValidationError,
)
from .ingest import INTERVIEW_NAME
from .media import extract_frames
from .oracle import generate_persona, make_oracle, write_transcript_line
from .persona import ScenarioContext, compose_persona_instruction, load_persona, load_questionnaire, validate_persona
from .scenario import ClipManifest, build_trial_orders, load_manifest, make_placeholder_tree
from .simulator import (
    LOG_NAME,
    RetryPolicy,
    TrialLog,
    administer_post_study,
    atomic_write,
    replay_log,
    run_trial,
)

log = logging.getLogger(__name__)


@dataclass
class BatchSummary:
    done: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)
    fatal: str = ""

    def to_dict(self) -> dict:
        return {"done": sorted(self.done), "skipped": sorted(self.skipped),
                "failed": sorted([list(f) for f in self.failed]), "fatal": self.fatal}


def write_run_meta(cfg: RunConfig, command: str, started: datetime, summary: dict) -> Path:
    """Record this command's config snapshot under its key in ``<out>/run_meta.json``."""
    path = cfg.out / "run_meta.json"
    meta = json.loads(path.read_text()) if path.is_file() else {}
    meta[command] = {
        "config": cfg.snapshot(),
        "seed": cfg.seed,
        "tool_version": __version__,
        "started": started.isoformat(timespec="seconds"),
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "summary": summary,
    }
    atomic_write(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def _transcript(cfg: RunConfig):
    if cfg.oracle.backend != "remote":
        return None
    lock = threading.Lock()
    path = cfg.out / "transcripts.jsonl"

    def record(entry: dict) -> None:
        with lock:
            write_transcript_line(path, entry)

    return record


def _existing_persona(path: Path) -> bool:
    try:
        return not validate_persona(load_persona(path))
    except (OSError, ValidationError):
        return False


def build_personas(cfg: RunConfig, scenario: ScenarioContext = ScenarioContext()) -> BatchSummary:
    """One persona file per questionnaire in ``paths.questionnaires``; valid files are kept."""
    src = cfg.paths.questionnaires
    if src is None or not src.is_dir():
        raise ConfigError(f"questionnaire directory not found: {src}")
    files = sorted(src.glob("*.json"))
    if not files:
        raise ConfigError(f"no questionnaire files in {src}")
    cfg.persona_out.mkdir(parents=True, exist_ok=True)
    oracle = make_oracle(cfg.oracle, cfg.seed or 0, _transcript(cfg))
    summary = BatchSummary()
    for path in files:
        try:
            response = load_questionnaire(path)
        except QuestionnaireError as exc:
            summary.failed.append((path.name, str(exc)))
            continue
        pid = response.participant_id
        target = cfg.persona_out / f"{pid}.json"
        if _existing_persona(target):
            summary.skipped.append(pid)
            continue
        try:
            profile = generate_persona(oracle, compose_persona_instruction(response, scenario))
        except PersonaGenerationError as exc:
            summary.failed.append((pid, str(exc)))
            continue
        except OracleUnavailable as exc:
            summary.fatal = str(exc)
            break
        profile.name = pid
        problems = validate_persona(profile)
        if problems:
            summary.failed.append((pid, "persona failed checks: " + ", ".join(problems)))
            continue
        atomic_write(target, profile.to_json())
        summary.done.append(pid)
    return summary


def prepare_manifest(cfg: RunConfig) -> ClipManifest:
    """Load the clip tree, extracting any missing frames under ``<out>/frames``.

    Without a configured tree the mock backend gets placeholder clips inside
    the output directory; a remote backend needs real clips.
    """
    root = cfg.paths.manifest
    if root is None:
        if cfg.oracle.backend != "mock":
            raise ConfigError("paths.manifest is required for the remote backend")
        root = cfg.out / "placeholder_clips"
        if not (root / "no-ehmi_pass").is_dir():
            make_placeholder_tree(root, cfg.grid)
    manifest = load_manifest(root, cfg.grid, frames_root=cfg.out / "frames")
    if manifest.pending:
        for ref in manifest.pending:
            extract_frames(ref.path, outdir=ref.frames_dir)
        manifest.refresh_frames()
    manifest.write_cache(cfg.out / "manifest_cache.json")
    return manifest


def _reusable(path: Path) -> dict | None:
    if not path.is_file():
        return None
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    if not data.get("valid", False) or not replay_log(data).passed:
        return None
    return data


def run_simulations(cfg: RunConfig, oracle=None) -> BatchSummary:
    """Six trials per persona in its counterbalanced order, then the interview.

    Completed, replay-valid logs are reused, so an interrupted batch resumes
    where it stopped.  A backend outage stops new work and is reported as
    ``fatal``; logs are written atomically, so nothing half-written remains.
    """
    seed = cfg.require_seed()
    src = cfg.persona_in
    files = sorted(src.glob("*.json")) if src.is_dir() else []
    if not files:
        raise ConfigError(f"no persona files in {src}")
    profiles = []
    for f in files:
        try:
            profiles.append(load_persona(f))
        except ValidationError as exc:
            raise ConfigError(f"persona file {f.name}: {exc}") from exc
    profiles.sort(key=lambda p: p.name)
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ConfigError("persona names must be unique")
    try:
        manifest = prepare_manifest(cfg)
    except ExtractionError as exc:
        raise ConfigError(f"frame extraction failed: {exc}") from exc
    oracle = oracle or make_oracle(cfg.oracle, seed, _transcript(cfg))
    plans = build_trial_orders(len(profiles), ids=names)
    out = cfg.sim_out
    out.mkdir(parents=True, exist_ok=True)
    summary = BatchSummary()
    lock = threading.Lock()
    stop = threading.Event()
    retry = RetryPolicy()

    def one_persona(profile, plan) -> None:
        memories = {}
        for idx, cond in enumerate(plan.conditions, 1):
            if stop.is_set():
                return
            key = f"{profile.name}/{idx}_{cond.dirname}"
            data = _reusable(out / key / LOG_NAME)
            if data is not None:
                memories[cond] = TrialLog.from_dict(data).memory
                with lock:
                    summary.skipped.append(key)
                continue
            try:
                trial = run_trial(profile, cond, oracle, manifest, retry, seed, idx, out)
            except TrialError as exc:
                atomic_write(out / key / LOG_NAME, exc.log.to_json())
                with lock:
                    summary.failed.append((key, str(exc)))
                continue
            except OracleUnavailable as exc:
                with lock:
                    summary.fatal = summary.fatal or str(exc)
                stop.set()
                return
            memories[cond] = trial.memory
            with lock:
                summary.done.append(key)
            log.info("trial %s crossing_time=%s", key, trial.crossing_time)
        interview = out / profile.name / INTERVIEW_NAME
        if len(memories) != len(plan.conditions) or interview.is_file():
            return
        try:
            answers = administer_post_study(profile, memories, oracle, plan.conditions, retry)
        except OracleUnavailable as exc:
            with lock:
                summary.fatal = summary.fatal or str(exc)
            stop.set()
            return
        except ValidationError as exc:
            with lock:
                summary.failed.append((f"{profile.name}/interview", str(exc)))
            return
        payload = {"persona": profile.name, "order": [c.dirname for c in plan.conditions],
                   "answers": answers.__dict__}
        atomic_write(interview, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    by_name = {p.name: p for p in profiles}
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = [pool.submit(one_persona, by_name[plan.participant], plan) for plan in plans]
        for fut in futures:
            fut.result()
    return summary
