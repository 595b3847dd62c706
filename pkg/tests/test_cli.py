import json

import pytest
from click.testing import CliRunner
from conftest import write_questionnaires

from crossbench.cli import main
from crossbench.scenario import enumerate_conditions, make_placeholder_tree
from crossbench.synthetic import participant_ids, synthetic_export


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def personas(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    write_questionnaires(root / "questionnaires")
    res = invoke("persona", "build", "--questionnaires", root / "questionnaires", "--out", root / "out", "--seed", 1)
    assert res.exit_code == 0, res.output
    return root


@pytest.fixture(scope="module")
def simulated(personas):
    out = personas / "out"
    res = invoke("sim", "run", "--out", out, "--seed", 1, "--jobs", 4)
    assert res.exit_code == 0, res.output
    return out


def write_exports(root, ids):
    root.mkdir(parents=True, exist_ok=True)
    for pid in ids:
        for cond in enumerate_conditions():
            data = synthetic_export(pid, cond, seed=3)
            (root / f"{pid}_{cond.dirname}.json").write_text(json.dumps(data))
    return root


def files_under(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()}


def test_persona_build_writes_twenty(personas):
    files = sorted((personas / "out" / "personas").glob("*.json"))
    assert [f.stem for f in files] == participant_ids(20)
    meta = json.loads((personas / "out" / "run_meta.json").read_text())
    assert meta["persona_build"]["seed"] == 1


def test_persona_build_partial_and_rerun(tmp_path):
    q = tmp_path / "q"
    write_questionnaires(q)
    (q / "P07.json").write_text('{"participant_id": "P07", "age": 30}')
    res = invoke("persona", "build", "--questionnaires", q, "--out", tmp_path / "out", "--seed", 0)
    assert res.exit_code == 3
    assert "P07.json" in res.output + (res.stderr if res.stderr_bytes else "")
    assert len(list((tmp_path / "out" / "personas").glob("*.json"))) == 19
    again = invoke("persona", "build", "--questionnaires", q, "--out", tmp_path / "out", "--seed", 0)
    assert "0 done, 19 skipped, 1 failed" in again.output


def test_sim_run_writes_120_logs(simulated):
    logs = sorted((simulated / "sim").rglob("simulation_log.json"))
    assert len(logs) == 120
    assert len(list((simulated / "sim").rglob("interview.json"))) == 20
    assert (simulated / "manifest_cache.json").is_file()


def test_sim_run_resumes(simulated):
    before = files_under(simulated / "sim")
    res = invoke("sim", "run", "--out", simulated, "--seed", 1)
    assert res.exit_code == 0
    assert "0 done, 120 skipped, 0 failed" in res.output
    assert files_under(simulated / "sim") == before


def test_replay_pass_and_fail(simulated, tmp_path):
    log = sorted((simulated / "sim").rglob("simulation_log.json"))[0]
    res = invoke("sim", "replay", log)
    assert res.exit_code == 0 and res.output.startswith("PASS: ")
    data = json.loads(log.read_text())
    data["records"][0]["status"] = "o-o-o-o-*-|ROAD"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    res = invoke("sim", "replay", bad)
    assert res.exit_code == 1 and res.output.startswith("FAIL at step 0")
    bad.write_text("{not json")
    assert invoke("sim", "replay", bad).exit_code == 1


def test_unreachable_backend_exits_four(personas, tmp_path, monkeypatch):
    monkeypatch.setenv("CROSSBENCH_TEST_KEY", "secret")
    clips = make_placeholder_tree(tmp_path / "clips")
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        f"out: {tmp_path / 'out'}\nseed: 1\n"
        f"paths:\n  personas: {personas / 'out' / 'personas'}\n  manifest: {clips}\n"
        "oracle:\n  backend: remote\n  endpoint: http://127.0.0.1:9/v1/chat/completions\n"
        "  api_key_env: CROSSBENCH_TEST_KEY\n  retry_limit: 0\n  retry_backoff: 0\n  timeout: 2\n"
    )
    res = invoke("sim", "run", "--config", cfg)
    assert res.exit_code == 4
    assert "backend unavailable" in res.output + (res.stderr if res.stderr_bytes else "")
    assert list((tmp_path / "out" / "sim").rglob("simulation_log.json")) == []
    assert list((tmp_path / "out").rglob("*.tmp")) == []


def test_compare_writes_report(simulated, tmp_path):
    exports = write_exports(tmp_path / "exports", participant_ids(20))
    out = tmp_path / "out"
    res = invoke("compare", "--sim", simulated / "sim", "--human-exports", exports,
                 "--out", out, "--seed", 5, "--n-perm", 199)
    assert res.exit_code == 0, res.output
    bundle = json.loads((out / "report" / "results.json").read_text())
    assert len(bundle["crossing_time"]["anova"]["exclude"]["effects"]) == 7
    assert len(list((out / "report").iterdir())) == 11
    ds = json.loads((out / "cohort.json").read_text())
    assert len(ds["observations"]) == 240


def test_compare_vlm_only_notice(simulated, tmp_path):
    res = CliRunner().invoke(main, ["compare", "--sim", str(simulated / "sim"), "--out", str(tmp_path / "out"),
                                    "--seed", "5", "--n-perm", "99"])
    assert res.exit_code == 0
    assert "only group 'vlm' present; group comparisons skipped" in res.output


def test_writes_stay_under_out(simulated, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    before = set(tmp_path.iterdir())
    out = tmp_path / "out"
    invoke("ingest", "--sim", simulated / "sim", "--out", out)
    invoke("report", "--out", out, "--seed", 2, "--n-perm", 99)
    assert set(tmp_path.iterdir()) - before == {out}
    assert (out / "report" / "results.json").is_file()


def test_missing_seed_is_usage_error(simulated, tmp_path):
    res = invoke("compare", "--sim", simulated / "sim", "--out", tmp_path / "out")
    assert res.exit_code == 2 and "seed" in res.output


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("out: x\nsped: 1\n")
    res = invoke("report", "--config", cfg)
    assert res.exit_code == 2 and "unknown config keys: sped" in res.output


def test_report_missing_dataset(tmp_path):
    res = invoke("report", "--out", tmp_path, "--seed", 1)
    assert res.exit_code == 2 and "dataset not found" in res.output
