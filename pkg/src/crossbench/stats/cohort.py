"""Cohort datasets and the human-vs-persona comparisons run over them."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DesignError, PreconditionError, SchemaError
from ..scenario import DEFAULT_GRID, Condition, GridSpec, enumerate_conditions
from ..trajectory import GridTrace, check_trace, first_wait_position, never_waited
from .art import EffectsTable, rank_permutation_anova
from .descriptive import descriptive_summary, kde_curve, wilson_interval
from .ranktests import holm_adjust, mann_whitney_test

GROUPS = ("human", "vlm")
CONVENTIONS = ("exclude", "impute")
TRIAL_LIKERT = ("q1_confidence", "q2_trust")
STUDY_LIKERT = ("q1_similarity", "q2_genuineness", "q3_acceptance", "q4_helpfulness")


@dataclass(frozen=True)
class Observation:
    group: str
    owner: str
    condition: Condition
    crossing_time: float | None
    likert: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "owner": self.owner,
            "condition": self.condition.dirname,
            "crossing_time": self.crossing_time,
            "likert": dict(sorted(self.likert.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        ct = d.get("crossing_time")
        return cls(d["group"], str(d["owner"]), Condition.parse(d["condition"]),
                   None if ct is None else float(ct), dict(d.get("likert") or {}))


@dataclass(frozen=True)
class Interview:
    group: str
    owner: str
    likert: dict

    def to_dict(self) -> dict:
        return {"group": self.group, "owner": self.owner, "likert": dict(sorted(self.likert.items()))}


@dataclass
class CohortDataset:
    observations: list[Observation]
    traces: list[GridTrace] = field(default_factory=list)
    interviews: list[Interview] = field(default_factory=list)
    grid: GridSpec = DEFAULT_GRID

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        seen = set()
        for o in self.observations:
            if o.group not in GROUPS:
                raise SchemaError(f"unknown group {o.group!r}")
            key = (o.group, o.owner, o.condition)
            if key in seen:
                raise SchemaError(f"duplicate observation {o.group}/{o.owner}/{o.condition.dirname}")
            seen.add(key)
            if o.crossing_time is not None and not (math.isfinite(o.crossing_time) and o.crossing_time > 0):
                raise SchemaError(f"{o.group}/{o.owner}: crossing_time must be positive")
        for tr in self.traces:
            problems = check_trace(tr, self.grid)
            if problems:
                raise SchemaError(f"trace {tr.group}/{tr.owner}/{tr.condition.dirname}: {problems[0]}")
        owners = Counter((i.group, i.owner) for i in self.interviews)
        dup = [k for k, c in owners.items() if c > 1]
        if dup:
            raise SchemaError(f"duplicate interview {dup[0][0]}/{dup[0][1]}")

    def groups(self) -> list[str]:
        return [g for g in GROUPS if any(o.group == g for o in self.observations)]

    def owners(self, group: str) -> list[str]:
        return sorted({o.owner for o in self.observations if o.group == group})

    def select(self, group: str | None = None, condition: Condition | None = None,
               owners=None) -> list[Observation]:
        owners = set(owners) if owners is not None else None
        return [
            o for o in self.observations
            if (group is None or o.group == group)
            and (condition is None or o.condition == condition)
            and (owners is None or o.owner in owners)
        ]

    def to_dict(self) -> dict:
        key = lambda o: (o.group, o.owner, o.condition)
        return {
            "observations": [o.to_dict() for o in sorted(self.observations, key=key)],
            "traces": [t.to_dict() for t in sorted(self.traces, key=key)],
            "interviews": [i.to_dict() for i in sorted(self.interviews, key=lambda i: (i.group, i.owner))],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, grid: GridSpec = DEFAULT_GRID) -> "CohortDataset":
        try:
            return cls(
                [Observation.from_dict(o) for o in d["observations"]],
                [GridTrace.from_dict(t) for t in d.get("traces", [])],
                [Interview(i["group"], str(i["owner"]), dict(i["likert"])) for i in d.get("interviews", [])],
                grid,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed cohort dataset: {exc}") from exc

    def merge(self, other: "CohortDataset") -> "CohortDataset":
        return CohortDataset(self.observations + other.observations, self.traces + other.traces,
                             self.interviews + other.interviews, self.grid)


def load_dataset(path, grid: GridSpec = DEFAULT_GRID) -> CohortDataset:
    return CohortDataset.from_dict(json.loads(Path(path).read_text()), grid)


# -- crossing time ---------------------------------------------------------------


def censored_value(grid: GridSpec = DEFAULT_GRID) -> float:
    """Imputed crossing time for censored trials: latest possible crossing plus one second."""
    return float(grid.last_step + 1 + 1)


def crossing_times(obs: list[Observation], convention: str = "exclude",
                   grid: GridSpec = DEFAULT_GRID) -> list[float]:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown censoring convention {convention!r}")
    if convention == "exclude":
        return [o.crossing_time for o in obs if o.crossing_time is not None]
    fill = censored_value(grid)
    return [fill if o.crossing_time is None else o.crossing_time for o in obs]


def crossing_time_anova(ds: CohortDataset, n_perm: int = 4999, seed: int = 0,
                        convention: str = "exclude", mode: str = "sampled") -> EffectsTable:
    """eHMI x AV x Group rank permutation ANOVA on crossing time."""
    obs = ds.observations if convention == "impute" else [o for o in ds.observations if o.crossing_time is not None]
    y = crossing_times(obs, convention, ds.grid)
    factors = {
        "eHMI": [o.condition.ehmi for o in obs],
        "AV": [o.condition.av_behavior for o in obs],
        "Group": [o.group for o in obs],
    }
    return rank_permutation_anova(y, factors, n_perm=n_perm, seed=seed, mode=mode)


@dataclass(frozen=True)
class SliceResult:
    condition: Condition
    n_human: int
    n_vlm: int
    censored_human: int
    censored_vlm: int
    u: float
    p: float
    p_holm: float
    method: str
    convention: str

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.dirname, "n_human": self.n_human, "n_vlm": self.n_vlm,
            "censored_human": self.censored_human, "censored_vlm": self.censored_vlm,
            "U": self.u, "p": self.p, "p_holm": self.p_holm, "method": self.method,
            "convention": self.convention,
        }


def condition_slice_tests(ds: CohortDataset, convention: str = "exclude",
                          mode: str = "auto") -> list[SliceResult]:
    """Human-vs-persona Mann-Whitney on crossing time within each of the six conditions."""
    rows = []
    for cond in enumerate_conditions():
        h = ds.select("human", cond)
        v = ds.select("vlm", cond)
        for name, group in (("human", h), ("vlm", v)):
            if not crossing_times(group, convention, ds.grid):
                raise DesignError(f"no {name} crossing times for condition {cond.dirname}")
        x = crossing_times(h, convention, ds.grid)
        y = crossing_times(v, convention, ds.grid)
        res = mann_whitney_test(x, y, mode=mode)
        rows.append((cond, len(x), len(y), sum(o.crossing_time is None for o in h),
                     sum(o.crossing_time is None for o in v), res))
    adjusted = holm_adjust([r[-1].p for r in rows])
    return [
        SliceResult(cond, nh, nv, ch, cv, res.u, res.p, padj, res.method, convention)
        for (cond, nh, nv, ch, cv, res), padj in zip(rows, adjusted)
    ]


@dataclass(frozen=True)
class SubsetResult:
    k: int
    index: int
    members: tuple[str, ...]
    n_human: int
    n_vlm: int
    mean_human: float
    mean_vlm: float
    u: float
    p: float
    method: str

    def to_dict(self) -> dict:
        return {
            "k": self.k, "index": self.index, "members": list(self.members),
            "n_human": self.n_human, "n_vlm": self.n_vlm,
            "mean_human": self.mean_human, "mean_vlm": self.mean_vlm,
            "U": self.u, "p": self.p, "method": self.method,
        }


def partition_ids(ids: list[str], k: int, seed: int) -> list[tuple[str, ...]]:
    ids = sorted(ids)
    if k < 1 or len(ids) % k:
        raise DesignError(f"subset size {k} does not divide {len(ids)} participants")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return [tuple(sorted(shuffled[i:i + k])) for i in range(0, len(ids), k)]


def subset_comparison(ds: CohortDataset, k: int, seed: int = 0,
                      convention: str = "exclude") -> list[SubsetResult]:
    """Split human participants into disjoint seeded groups of ``k`` and test each
    group's crossing times against the whole persona cohort."""
    humans = ds.owners("human")
    if not humans or not ds.owners("vlm"):
        raise DesignError("subset comparison needs both human and vlm observations")
    y = crossing_times(ds.select("vlm"), convention, ds.grid)
    out = []
    for i, members in enumerate(partition_ids(humans, k, seed)):
        x = crossing_times(ds.select("human", owners=members), convention, ds.grid)
        if not x:
            raise DesignError(f"human subset {i} has no crossing times")
        res = mann_whitney_test(x, y)
        out.append(SubsetResult(k, i, members, len(x), len(y), float(np.mean(x)), float(np.mean(y)),
                                res.u, res.p, res.method))
    return out


# -- trajectory features ------------------------------------------------------------


@dataclass(frozen=True)
class FeatureRow:
    feature: str
    group: str
    key: str
    count: int
    k: int
    n: int
    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"feature": self.feature, "group": self.group, "key": self.key, "count": self.count,
                "cumulative": self.k, "n": self.n, "proportion": self.k / self.n,
                "lo": self.lo, "hi": self.hi}


def _rows(feature: str, group: str, keys, counts, n: int, cumulative: bool = True) -> list[FeatureRow]:
    out, running = [], 0
    for key, c in zip(keys, counts):
        running = running + c if cumulative else c
        ci = wilson_interval(running, n)
        out.append(FeatureRow(feature, group, str(key), c, running, n, ci.lo, ci.hi))
    return out


def trajectory_features(ds: CohortDataset) -> list[FeatureRow]:
    """Cumulative first-wait positions, cumulative decisions by time step, and
    never-waited counts per condition, each with 95% Wilson intervals."""
    grid = ds.grid
    rows = []
    for group in GROUPS:
        traces = [t for t in ds.traces if t.group == group]
        if not traces:
            continue
        firsts = Counter(first_wait_position(t) for t in traces)
        rows += _rows("first_wait", group, range(grid.positions),
                      [firsts.get(p, 0) for p in range(grid.positions)], len(traces))
        entries = [e for t in traces for e in t.entries]
        for action in ("forward", "stop", "backward"):
            per_t = Counter(e.time_step for e in entries if e.action == action)
            rows += _rows(f"decisions_{action}", group, range(grid.last_step + 1),
                          [per_t.get(t, 0) for t in range(grid.last_step + 1)], len(entries))
        for cond in enumerate_conditions():
            sub = [t for t in traces if t.condition == cond]
            if sub:
                k = sum(never_waited(t) for t in sub)
                rows += _rows("never_waited", group, [cond.dirname], [k], len(sub), cumulative=False)
    return rows


# -- likert ------------------------------------------------------------------------


@dataclass(frozen=True)
class LikertRow:
    metric: str
    human: dict
    vlm: dict
    test: str
    statistic: float | None
    p: float | None

    def to_dict(self) -> dict:
        return {"metric": self.metric, "human": self.human, "vlm": self.vlm, "test": self.test,
                "statistic": self.statistic, "p": self.p}


def likert_analysis(ds: CohortDataset, n_perm: int = 4999, seed: int = 0) -> tuple[list[LikertRow], dict]:
    """Per-trial ratings: Group x Condition rank permutation ANOVA (Group effect reported).
    Post-study ratings: Mann-Whitney between groups."""
    rows, tables = [], {}
    both = len(ds.groups()) == 2
    for metric in TRIAL_LIKERT:
        obs = [o for o in ds.observations if metric in o.likert]
        summ = {g: descriptive_summary([o.likert[metric] for o in obs if o.group == g]).to_dict() for g in GROUPS}
        stat = p = None
        test = "skipped"
        if both and all(any(o.group == g for o in obs) for g in GROUPS):
            table = rank_permutation_anova(
                [o.likert[metric] for o in obs],
                {"Group": [o.group for o in obs], "Condition": [o.condition.dirname for o in obs]},
                n_perm=n_perm, seed=seed,
            )
            tables[metric] = table
            stat, p, test = table["Group"].f, table["Group"].p, "art_permutation"
        rows.append(LikertRow(metric, summ["human"], summ["vlm"], test, stat, p))
    for metric in STUDY_LIKERT:
        vals = {g: [i.likert[metric] for i in ds.interviews if i.group == g and metric in i.likert] for g in GROUPS}
        summ = {g: descriptive_summary(vals[g]).to_dict() for g in GROUPS}
        stat = p = None
        test = "skipped"
        if all(vals.values()):
            res = mann_whitney_test(vals["human"], vals["vlm"])
            stat, p, test = res.u, res.p, f"mann_whitney_{res.method}"
        rows.append(LikertRow(metric, summ["human"], summ["vlm"], test, stat, p))
    return rows, tables


# -- whole pipeline -------------------------------------------------------------------


@dataclass
class CohortResults:
    descriptives: dict
    kde: dict
    anova: dict
    slices: list[SliceResult]
    subsets: list[SubsetResult]
    features: list[FeatureRow]
    likert: list[LikertRow]
    likert_tables: dict
    notices: list[str]
    params: dict
    box: dict = field(default_factory=dict)
    per_condition: dict = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.descriptives

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "notices": list(self.notices),
            "crossing_time": {
                "descriptives": self.descriptives,
                "anova": {k: t.to_dict() for k, t in self.anova.items()},
                "kde": self.kde,
            },
            "condition_slices": [r.to_dict() for r in self.slices],
            "subsets": [r.to_dict() for r in self.subsets],
            "trajectory_features": [r.to_dict() for r in self.features],
            "likert": {
                "rows": [r.to_dict() for r in self.likert],
                "anova": {k: t.to_dict() for k, t in self.likert_tables.items()},
            },
        }


def analyze(ds: CohortDataset, n_perm: int = 4999, seed: int = 0,
            subset_sizes=(5, 10)) -> CohortResults:
    """Every comparison that applies to the data present; group tests are skipped
    (with a notice) when only one group is available."""
    if not ds.observations:
        raise PreconditionError("dataset has no observations")
    notices = []
    groups = ds.groups()
    descriptives, kde, box = {}, {}, {}
    for g in groups:
        obs = ds.select(g)
        descriptives[g] = {
            "exclude": descriptive_summary([o.crossing_time for o in obs]).to_dict(),
            "impute": descriptive_summary(crossing_times(obs, "impute", ds.grid)).to_dict(),
        }
        vals = crossing_times(obs, "exclude", ds.grid)
        box[g] = vals
        if len(vals) >= 2 and np.ptp(vals) > 0:
            kde[g] = kde_curve(vals)
        else:
            notices.append(f"{g}: fewer than two distinct crossing times, no KDE")
    anova, slices, subsets = {}, [], []
    if len(groups) == 2:
        for conv in CONVENTIONS:
            try:
                anova[conv] = crossing_time_anova(ds, n_perm, seed, conv)
            except DesignError as exc:
                notices.append(f"crossing-time ANOVA ({conv}) skipped: {exc}")
        try:
            slices = condition_slice_tests(ds)
        except DesignError as exc:
            notices.append(f"condition slices skipped: {exc}")
        for k in subset_sizes:
            try:
                subsets += subset_comparison(ds, k, seed)
            except DesignError as exc:
                notices.append(f"subsets of {k} skipped: {exc}")
    else:
        notices.append(f"only group {groups[0]!r} present; group comparisons skipped")
    likert, tables = likert_analysis(ds, n_perm, seed)
    params = {"n_perm": n_perm, "seed": seed, "subset_sizes": list(subset_sizes),
              "censored_imputed_as": censored_value(ds.grid), "groups": groups}
    per_condition = {
        c.dirname: {g: crossing_times(ds.select(g, c), "exclude", ds.grid) for g in groups}
        for c in enumerate_conditions()
    }
    return CohortResults(descriptives, kde, anova, slices, subsets, trajectory_features(ds),
                         likert, tables, notices, params, box, per_condition)
