"""Run configuration: a YAML file with nested sections, overridden by CLI flags."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .oracle import OracleConfig
from .scenario import GridSpec
from .trajectory import DEFAULT_STOP_THRESHOLD

PATH_KEYS = ("questionnaires", "personas", "manifest", "human_exports", "human_interviews", "sim", "dataset")


@dataclass(frozen=True)
class Paths:
    questionnaires: Path | None = None
    personas: Path | None = None
    manifest: Path | None = None
    human_exports: Path | None = None
    human_interviews: Path | None = None
    sim: Path | None = None
    dataset: Path | None = None


@dataclass(frozen=True)
class RunConfig:
    out: Path
    seed: int | None = None
    jobs: int = 1
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    n_perm: int = 4999
    paths: Paths = field(default_factory=Paths)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    source: Path | None = None

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this command samples; set 'seed' in the config or pass --seed")
        return self.seed

    # every command writes only under ``out``; ``paths`` entries are inputs
    @property
    def persona_out(self) -> Path:
        return self.out / "personas"

    @property
    def persona_in(self) -> Path:
        return self.paths.personas or self.persona_out

    @property
    def sim_out(self) -> Path:
        return self.out / "sim"

    @property
    def sim_in(self) -> Path:
        return self.paths.sim or self.sim_out

    @property
    def dataset_out(self) -> Path:
        return self.out / "cohort.json"

    @property
    def dataset_in(self) -> Path:
        return self.paths.dataset or self.dataset_out

    @property
    def report_dir(self) -> Path:
        return self.out / "report"

    def snapshot(self) -> dict:
        """Plain-data view for ``run_meta.json``; credentials never appear here."""
        d = {
            "out": str(self.out),
            "seed": self.seed,
            "jobs": self.jobs,
            "stop_threshold": self.stop_threshold,
            "n_perm": self.n_perm,
            "paths": {k: (str(v) if v is not None else None) for k, v in asdict(self.paths).items()},
            "oracle": asdict(self.oracle),
            "grid": asdict(self.grid),
            "config_file": str(self.source) if self.source else None,
        }
        return d


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    return value


def _build(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} settings: {exc}") from exc


def load_config(path=None, **overrides) -> RunConfig:
    """Read ``path`` (optional) and apply non-None ``overrides``; flags win.

    Relative paths in the file resolve against the file's directory, relative
    paths from flags against the working directory.  ``backend`` overrides
    the oracle section.
    """
    raw, base = {}, Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must be a mapping at the top level")
        base = path.resolve().parent
    allowed = {"out", "seed", "jobs", "stop_threshold", "n_perm", "paths", "oracle", "grid"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    def resolve(value, root: Path) -> Path | None:
        if value is None:
            return None
        p = Path(str(value)).expanduser()
        return (p if p.is_absolute() else root / p).resolve()

    paths_raw = {k: resolve(v, base) for k, v in _section(raw, "paths").items()}
    paths = _build(Paths, paths_raw, "paths")
    oracle_raw = dict(_section(raw, "oracle"))
    if overrides.get("backend") is not None:
        oracle_raw["backend"] = overrides["backend"]
    oracle = _build(OracleConfig, oracle_raw, "oracle")
    grid = _build(GridSpec, _section(raw, "grid"), "grid")

    out = overrides.get("out")
    out = resolve(out, Path.cwd()) if out is not None else resolve(raw.get("out"), base)
    if out is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    path_over = {k: resolve(overrides[k], Path.cwd()) for k in PATH_KEYS if overrides.get(k) is not None}
    if path_over:
        paths = replace(paths, **path_over)

    def pick(key, default):
        v = overrides.get(key)
        return v if v is not None else raw.get(key, default)

    cfg = RunConfig(
        out=out,
        seed=pick("seed", None),
        jobs=int(pick("jobs", 1)),
        stop_threshold=float(pick("stop_threshold", DEFAULT_STOP_THRESHOLD)),
        n_perm=int(pick("n_perm", 4999)),
        paths=paths,
        oracle=oracle,
        grid=grid,
        source=path.resolve() if path is not None else None,
    )
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.n_perm < 1:
        raise ConfigError("n_perm must be >= 1")
    if cfg.stop_threshold <= 0:
        raise ConfigError("stop_threshold must be positive")
    if cfg.seed is not None and not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    return cfg
