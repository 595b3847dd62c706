"""Write a results bundle: one CSV and one SVG per topic plus ``results.json``."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from importlib import resources
from pathlib import Path

from ..errors import PreconditionError
from . import plotting
from .cohort import CohortResults

TOPICS = ("crossing_time", "trajectory_features", "condition_slices", "subsets", "likert")
FORMATS = ("json", "csv", "svg")


def reference_constants() -> dict:
    """Published headline numbers, shipped for side-by-side reading only."""
    text = resources.files("crossbench").joinpath("data", "reference_constants.json").read_text()
    return json.loads(text)


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _tables(res: CohortResults) -> dict[str, str]:
    ct_rows = []
    for group, convs in sorted(res.descriptives.items()):
        for conv, s in sorted(convs.items()):
            ct_rows.append(["descriptive", group, conv, "mean", s["mean"], None])
            ct_rows.append(["descriptive", group, conv, "sd", s["sd"], None])
            ct_rows.append(["descriptive", group, conv, "median", s["median"], None])
            ct_rows.append(["descriptive", group, conv, "n", s["n"], None])
            ct_rows.append(["descriptive", group, conv, "n_censored", s["n_censored"], None])
    for conv, table in sorted(res.anova.items()):
        for e in table.effects:
            ct_rows.append(["anova", e.name, conv, "F", e.f, e.p])
    out = {"crossing_time": _csv_text(["section", "key", "convention", "stat", "value", "p"], ct_rows)}

    out["trajectory_features"] = _csv_text(
        ["feature", "group", "key", "count", "cumulative", "n", "proportion", "lo", "hi"],
        [[d["feature"], d["group"], d["key"], d["count"], d["cumulative"], d["n"], d["proportion"], d["lo"], d["hi"]]
         for d in (r.to_dict() for r in res.features)],
    )
    cols = ["condition", "n_human", "n_vlm", "censored_human", "censored_vlm", "U", "p", "p_holm", "method",
            "convention"]
    out["condition_slices"] = _csv_text(cols, [[r.to_dict()[c] for c in cols] for r in res.slices])
    cols = ["k", "index", "members", "n_human", "n_vlm", "mean_human", "mean_vlm", "U", "p", "method"]
    out["subsets"] = _csv_text(cols, [[r.to_dict()[c] for c in cols] for r in res.subsets])
    out["likert"] = _csv_text(
        ["metric", "human_mean", "human_sd", "human_n", "vlm_mean", "vlm_sd", "vlm_n", "test", "statistic", "p"],
        [[r.metric, r.human["mean"], r.human["sd"], r.human["n"], r.vlm["mean"], r.vlm["sd"], r.vlm["n"],
          r.test, r.statistic, r.p] for r in res.likert],
    )
    return out


def _figures(res: CohortResults, out: Path) -> list[Path]:
    d = _clean(res.to_dict())
    anova = d["crossing_time"]["anova"].get("exclude")
    return [
        plotting.crossing_time_figure(res.kde, res.box, anova, out / "crossing_time.svg"),
        plotting.feature_figure(d["trajectory_features"], out / "trajectory_features.svg"),
        plotting.slices_figure(res.per_condition, d["condition_slices"], out / "condition_slices.svg"),
        plotting.subsets_figure(d["subsets"], out / "subsets.svg"),
        plotting.likert_figure(d["likert"]["rows"], out / "likert.svg"),
    ]


def emit_report(res: CohortResults | None, out_dir, formats=FORMATS) -> list[Path]:
    """Write the bundle and return the written paths (sorted)."""
    if res is None or res.is_empty():
        raise PreconditionError("nothing to report: results are empty")
    formats = tuple(formats)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown report formats {bad}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    written = []
    if "csv" in formats:
        for topic, text in _tables(res).items():
            path = out / f"{topic}.csv"
            path.write_text(text)
            written.append(path)
    if "svg" in formats:
        written += _figures(res, out)
    if "json" in formats:
        bundle = _clean(res.to_dict())
        bundle["reference"] = reference_constants()
        path = out / "results.json"
        path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return sorted(written)
