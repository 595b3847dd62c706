import dataclasses
import json

import pytest

from crossbench.errors import PreconditionError
from crossbench.stats.cohort import CohortDataset, analyze
from crossbench.stats.report import emit_report, reference_constants
from crossbench.synthetic import synthetic_cohort

EXPECTED = sorted([f"{t}.{ext}" for t in ("crossing_time", "trajectory_features", "condition_slices", "subsets", "likert")
                   for ext in ("csv", "svg")] + ["results.json"])


@pytest.fixture(scope="module")
def results():
    return analyze(synthetic_cohort(0), n_perm=99, seed=0)


def test_bundle_has_every_file(results, tmp_path):
    paths = emit_report(results, tmp_path)
    assert sorted(p.name for p in paths) == EXPECTED
    assert all(p.stat().st_size > 0 for p in paths)
    assert all(p.read_text().lstrip().startswith("<?xml") or "<svg" in p.read_text()[:500]
               for p in paths if p.suffix == ".svg")


def test_reemit_is_byte_identical(results, tmp_path):
    a = {p.name: p.read_bytes() for p in emit_report(results, tmp_path / "a")}
    b = {p.name: p.read_bytes() for p in emit_report(results, tmp_path / "b")}
    assert a == b


def test_results_json_carries_reference_constants(results, tmp_path):
    emit_report(results, tmp_path)
    bundle = json.loads((tmp_path / "results.json").read_text())
    assert bundle["reference"] == reference_constants()
    assert bundle["reference"]


def test_slice_csv_has_six_rows(results, tmp_path):
    emit_report(results, tmp_path)
    lines = (tmp_path / "condition_slices.csv").read_text().splitlines()
    assert lines[0].startswith("condition,n_human,n_vlm")
    assert len(lines) == 7


def test_formats_subset(results, tmp_path):
    paths = emit_report(results, tmp_path, formats=["json"])
    assert [p.name for p in paths] == ["results.json"]
    with pytest.raises(ValueError):
        emit_report(results, tmp_path, formats=["pdf"])


def test_empty_results_rejected(results, tmp_path):
    with pytest.raises(PreconditionError):
        emit_report(None, tmp_path)
    with pytest.raises(PreconditionError):
        emit_report(dataclasses.replace(results, descriptives={}), tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_vlm_only_report(tmp_path):
    ds = CohortDataset([o for o in synthetic_cohort(0).observations if o.group == "vlm"])
    paths = emit_report(analyze(ds, n_perm=99, seed=0), tmp_path)
    assert sorted(p.name for p in paths) == EXPECTED
