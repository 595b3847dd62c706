"""Static SVG figures for the report bundle.

Everything renders through the Agg backend inside an rcParams context with a
fixed SVG hash salt, so the same results always produce the same bytes.
"""

from __future__ import annotations

import contextlib
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {"human": "#3b6ea8", "vlm": "#d9822b"}
STYLE = {
    "svg.hashsalt": "crossbench",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 10,
    "legend.frameon": False,
    "figure.dpi": 100,
}


@contextlib.contextmanager
def report_style():
    with matplotlib.rc_context(STYLE):
        yield


def save_svg(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def crossing_time_figure(kde: dict, box: dict, anova: dict | None, path: Path) -> Path:
    with report_style():
        fig, (ax_kde, ax_box) = plt.subplots(1, 2, figsize=(8, 3.2))
        for group, curve in kde.items():
            xs, ys = zip(*curve)
            ax_kde.plot(xs, ys, color=COLORS.get(group), label=group)
            ax_kde.fill_between(xs, ys, alpha=0.2, color=COLORS.get(group))
        ax_kde.set_xlabel("crossing time (s)")
        ax_kde.set_ylabel("density")
        ax_kde.legend()
        groups = [g for g in box if box[g]]
        if groups:
            ax_box.boxplot([box[g] for g in groups], tick_labels=groups)
        ax_box.set_ylabel("crossing time (s)")
        if anova:
            text = "  ".join(f"{e['effect']}: p={e['p']:.3f}" for e in anova["effects"])
            fig.text(0.5, 0.01, text, ha="center", fontsize=6)
        fig.tight_layout(rect=(0, 0.05, 1, 1))
        return save_svg(fig, path)


def feature_figure(rows: list[dict], path: Path) -> Path:
    """Cumulative proportions with Wilson bands, one panel per feature family."""
    panels = [("first_wait", "first wait position"), ("decisions", "time step"), ("never_waited", "condition")]
    with report_style():
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
        for ax, (family, xlabel) in zip(axes, panels):
            series = {}
            for r in rows:
                if r["feature"].startswith(family):
                    series.setdefault((r["feature"], r["group"]), []).append(r)
            for i, ((feature, group), pts) in enumerate(sorted(series.items())):
                label = group if feature == family else f"{group} {feature.split('_', 1)[1]}"
                ys = [p["proportion"] for p in pts]
                lo = [p["lo"] for p in pts]
                hi = [p["hi"] for p in pts]
                if family == "never_waited":
                    xs = [j + (0.15 if group == "vlm" else -0.15) for j in range(len(pts))]
                    err = [[y - l for y, l in zip(ys, lo)], [h - y for y, h in zip(ys, hi)]]
                    ax.errorbar(xs, ys, yerr=err, fmt="o", color=COLORS.get(group), label=label, capsize=2)
                    ax.set_xticks(range(len(pts)), [p["key"] for p in pts], rotation=30, fontsize=7)
                else:
                    xs = [int(p["key"]) for p in pts]
                    style = ["-", "--", ":"][i % 3]
                    ax.step(xs, ys, where="post", color=COLORS.get(group), linestyle=style, label=label)
                    ax.fill_between(xs, lo, hi, step="post", alpha=0.15, color=COLORS.get(group))
            ax.set_xlabel(xlabel)
            ax.set_ylabel("proportion")
            ax.set_ylim(0, 1.05)
            if series:
                ax.legend(fontsize=6)
        fig.tight_layout()
        return save_svg(fig, path)


def slices_figure(per_condition: dict, slices: list[dict], path: Path) -> Path:
    """Per-condition crossing time boxes, human and persona side by side."""
    with report_style():
        fig, ax = plt.subplots(figsize=(8, 3.2))
        labels = list(per_condition)
        for j, group in enumerate(("human", "vlm")):
            data = [per_condition[c].get(group, []) for c in labels]
            pos = [i * 3 + j for i in range(len(labels))]
            keep = [(p, d) for p, d in zip(pos, data) if d]
            if keep:
                bp = ax.boxplot([d for _, d in keep], positions=[p for p, _ in keep], widths=0.8,
                                patch_artist=True)
                for patch in bp["boxes"]:
                    patch.set_facecolor(COLORS[group])
                    patch.set_alpha(0.5)
        ax.set_xticks([i * 3 + 0.5 for i in range(len(labels))], labels, fontsize=7)
        pmap = {s["condition"]: s["p"] for s in slices}
        for i, c in enumerate(labels):
            if c in pmap:
                ax.annotate(f"p={pmap[c]:.3f}", (i * 3 + 0.5, 1.0), xycoords=("data", "axes fraction"),
                            ha="center", va="top", fontsize=6)
        ax.set_ylabel("crossing time (s)")
        fig.tight_layout()
        return save_svg(fig, path)


def subsets_figure(subsets: list[dict], path: Path) -> Path:
    with report_style():
        fig, ax = plt.subplots(figsize=(6, 3.2))
        labels = [f"k={s['k']}#{s['index']}" for s in subsets]
        ax.bar(range(len(subsets)), [s["mean_human"] for s in subsets], color=COLORS["human"], label="human subset")
        if subsets:
            ax.axhline(subsets[0]["mean_vlm"], color=COLORS["vlm"], label="vlm cohort mean")
        for i, s in enumerate(subsets):
            ax.annotate(f"p={s['p']:.3f}", (i, s["mean_human"]), ha="center", va="bottom", fontsize=6)
        ax.set_xticks(range(len(subsets)), labels, fontsize=7)
        ax.set_ylabel("mean crossing time (s)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        return save_svg(fig, path)


def likert_figure(rows: list[dict], path: Path) -> Path:
    with report_style():
        fig, ax = plt.subplots(figsize=(7, 3.2))
        width = 0.38
        for j, group in enumerate(("human", "vlm")):
            means = [r[group]["mean"] if r[group]["mean"] is not None else 0.0 for r in rows]
            sds = [r[group]["sd"] if r[group]["sd"] is not None else 0.0 for r in rows]
            xs = [i + (j - 0.5) * width for i in range(len(rows))]
            ax.bar(xs, means, width, yerr=sds, color=COLORS[group], label=group, capsize=2)
        ax.set_xticks(range(len(rows)), [r["metric"].split("_", 1)[1] for r in rows], fontsize=7)
        ax.set_ylim(0, 5.5)
        ax.set_ylabel("rating (1-5)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        return save_svg(fig, path)
