"""Cohort statistics: descriptives, rank tests, ART permutation ANOVA, reports."""

from .art import EffectsTable, rank_permutation_anova
from .cohort import (
    CohortDataset,
    CohortResults,
    Interview,
    Observation,
    analyze,
    condition_slice_tests,
    crossing_time_anova,
    load_dataset,
    subset_comparison,
    trajectory_features,
)
from .descriptive import IntervalEstimate, descriptive_summary, kde_curve, wilson_interval
from .ranktests import holm_adjust, mann_whitney_test
from .report import emit_report, reference_constants

__all__ = [
    "CohortDataset", "CohortResults", "EffectsTable", "IntervalEstimate", "Interview", "Observation",
    "analyze", "condition_slice_tests", "crossing_time_anova", "descriptive_summary", "emit_report",
    "holm_adjust", "kde_curve", "load_dataset", "mann_whitney_test", "rank_permutation_anova",
    "reference_constants", "subset_comparison", "trajectory_features", "wilson_interval",
]
