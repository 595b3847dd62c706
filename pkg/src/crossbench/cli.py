"""``crossbench`` command line: persona build, sim run/replay, ingest, compare, report.

Exit codes: 0 success, 1 data error, 2 usage or config error, 3 partial
failure, 4 fatal backend error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    CrossbenchError,
    DesignError,
    ManifestError,
    OracleUnavailable,
    PreconditionError,
    ValidationError,
)

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_PARTIAL, EXIT_BACKEND = 0, 1, 2, 3, 4


def _common(f):
    """Options shared by every pipeline command."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory (overrides config)."),
        click.option("--seed", type=int, help="Seed for every sampled quantity."),
        click.option("--backend", type=click.Choice(["mock", "remote"]), help="Oracle backend."),
        click.option("--jobs", type=int, help="Maximum personas simulated concurrently."),
        click.option("--stop-threshold", type=float, help="Human stop threshold in m/s."),
        click.option("--n-perm", type=int, help="Permutations for the rank ANOVA."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _guarded(f):
    """Map workbench errors to exit codes with a one-line message."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except ManifestError as exc:
            click.echo("clip manifest incomplete:\n  " + "\n  ".join(exc.problems), err=True)
            sys.exit(EXIT_CONFIG)
        except OracleUnavailable as exc:
            click.echo(f"backend unavailable: {exc}", err=True)
            sys.exit(EXIT_BACKEND)
        except (ValidationError, DesignError, PreconditionError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except CrossbenchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)

    return wrapper


def _config(config_path, **flags) -> RunConfig:
    return load_config(config_path, **flags)


def _finish(cfg: RunConfig, command: str, started: datetime, summary) -> None:
    from .runner import write_run_meta

    write_run_meta(cfg, command, started, summary.to_dict())
    click.echo(f"{command}: {len(summary.done)} done, {len(summary.skipped)} skipped, "
               f"{len(summary.failed)} failed")
    for name, err in summary.failed:
        click.echo(f"  failed {name}: {err}", err=True)
    if summary.fatal:
        click.echo(f"aborted: backend unavailable: {summary.fatal}", err=True)
        sys.exit(EXIT_BACKEND)
    if summary.failed:
        sys.exit(EXIT_PARTIAL)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Persona street-crossing workbench."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.group()
def persona() -> None:
    """Persona documents."""


@persona.command("build")
@_common
@click.option("--questionnaires", type=click.Path(file_okay=False), help="Questionnaire directory.")
@_guarded
def persona_build(config_path, questionnaires, **flags):
    """Turn questionnaire files into validated persona files under OUT/personas."""
    from .runner import build_personas

    started = datetime.now(timezone.utc)
    cfg = _config(config_path, questionnaires=questionnaires, **flags)
    _finish(cfg, "persona_build", started, build_personas(cfg))


@main.group()
def sim() -> None:
    """Simulation runs and log verification."""


@sim.command("run")
@_common
@click.option("--personas", type=click.Path(file_okay=False), help="Persona directory.")
@click.option("--manifest", type=click.Path(file_okay=False), help="Clip tree root.")
@_guarded
def sim_run(config_path, personas, manifest, **flags):
    """Run every persona through all six conditions in counterbalanced order."""
    from .runner import run_simulations

    started = datetime.now(timezone.utc)
    cfg = _config(config_path, personas=personas, manifest=manifest, **flags)
    _finish(cfg, "sim_run", started, run_simulations(cfg))


@sim.command("replay")
@click.argument("log_file", type=click.Path(exists=True, dir_okay=False))
def sim_replay(log_file):
    """Re-derive every status and summary line of LOG_FILE from its decisions."""
    from .simulator import replay_log

    try:
        data = json.loads(Path(log_file).read_text())
    except json.JSONDecodeError as exc:
        click.echo(f"FAIL: not valid JSON ({exc})")
        sys.exit(EXIT_DATA)
    verdict = replay_log(data)
    if verdict.passed:
        ct = "none (did not cross)" if verdict.crossing_time is None else f"{verdict.crossing_time} s"
        click.echo(f"PASS: {verdict.steps} steps verified; crossing_time {ct}")
    else:
        click.echo(f"FAIL at step {verdict.steps}: {verdict.divergence}")
        sys.exit(EXIT_DATA)


def _ingest(cfg: RunConfig):
    from .ingest import build_dataset

    sims = [cfg.sim_in] if cfg.sim_in.is_dir() else []
    exports = [cfg.paths.human_exports] if cfg.paths.human_exports else []
    for d in exports:
        if not d.is_dir():
            raise ConfigError(f"human export directory not found: {d}")
    if not sims and not exports:
        raise ConfigError("nothing to ingest: no simulation directory and no human exports configured")
    return build_dataset(sims, exports, cfg.paths.human_interviews, cfg.stop_threshold, cfg.grid)


@main.command("ingest")
@_common
@click.option("--sim", type=click.Path(file_okay=False), help="Directory of simulation logs.")
@click.option("--human-exports", type=click.Path(file_okay=False), help="Directory of annotation exports.")
@click.option("--human-interviews", type=click.Path(dir_okay=False), help="Human post-study ratings (JSON).")
@_guarded
def ingest(config_path, sim, human_exports, human_interviews, **flags):
    """Merge simulation logs and human exports into OUT/cohort.json."""
    from .runner import BatchSummary
    from .simulator import atomic_write

    started = datetime.now(timezone.utc)
    cfg = _config(config_path, sim=sim, human_exports=human_exports, human_interviews=human_interviews, **flags)
    ds, notices = _ingest(cfg)
    atomic_write(cfg.dataset_out, ds.to_json())
    for n in notices:
        click.echo(f"notice: {n}", err=True)
    counts = {g: len(ds.select(g)) for g in ds.groups()}
    click.echo(f"wrote {cfg.dataset_out}: " + ", ".join(f"{g}={c}" for g, c in counts.items()))
    _finish(cfg, "ingest", started, BatchSummary(done=[str(cfg.dataset_out)]))


def _report(cfg: RunConfig, ds, command: str, started: datetime) -> None:
    from .runner import BatchSummary
    from .stats.cohort import analyze
    from .stats.report import emit_report

    results = analyze(ds, n_perm=cfg.n_perm, seed=cfg.require_seed())
    for n in results.notices:
        click.echo(f"notice: {n}", err=True)
    paths = emit_report(results, cfg.report_dir)
    click.echo(f"wrote {len(paths)} files to {cfg.report_dir}")
    _finish(cfg, command, started, BatchSummary(done=[p.name for p in paths]))


@main.command("compare")
@_common
@click.option("--sim", type=click.Path(file_okay=False), help="Directory of simulation logs.")
@click.option("--human-exports", type=click.Path(file_okay=False), help="Directory of annotation exports.")
@click.option("--human-interviews", type=click.Path(dir_okay=False), help="Human post-study ratings (JSON).")
@_guarded
def compare(config_path, sim, human_exports, human_interviews, **flags):
    """Ingest, run every comparison and write the report bundle to OUT/report."""
    from .simulator import atomic_write

    started = datetime.now(timezone.utc)
    cfg = _config(config_path, sim=sim, human_exports=human_exports, human_interviews=human_interviews, **flags)
    cfg.require_seed()
    ds, notices = _ingest(cfg)
    for n in notices:
        click.echo(f"notice: {n}", err=True)
    atomic_write(cfg.dataset_out, ds.to_json())
    _report(cfg, ds, "compare", started)


@main.command("report")
@_common
@click.option("--dataset", type=click.Path(dir_okay=False), help="Cohort dataset JSON.")
@_guarded
def report(config_path, dataset, **flags):
    """Analyse an existing cohort dataset and write the report bundle."""
    from .stats.cohort import load_dataset

    started = datetime.now(timezone.utc)
    cfg = _config(config_path, dataset=dataset, **flags)
    if not cfg.dataset_in.is_file():
        raise ConfigError(f"dataset not found: {cfg.dataset_in}")
    _report(cfg, load_dataset(cfg.dataset_in, cfg.grid), "report", started)


if __name__ == "__main__":
    main()
