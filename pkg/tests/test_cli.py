import json

import pytest

from screenrl.cli import main

FAST = {"encoder": "structural", "agent": {"hidden": 16}, "app": {"seed": 2, "screens": 8}}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(FAST))
    return p


def explore(tmp_path, config, name, *extra):
    out = tmp_path / name
    code = main(["explore", "--config", str(config), "--budget", "30", "--out-dir", str(out), *extra])
    return code, out


def test_genapp_is_deterministic(tmp_path):
    assert main(["genapp", "--seed", "5", "--out", str(tmp_path / "a.json")]) == 0
    assert main(["genapp", "--seed", "5", "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_explore_outputs_and_determinism(tmp_path, config):
    code, a = explore(tmp_path, config, "a")
    assert code == 0
    assert {p.name for p in a.iterdir()} == {"run.ndjson", "report.json", "config.json", "qnet.bin", "timing.json"}
    _, b = explore(tmp_path, config, "b")
    for name in ("run.ndjson", "report.json", "qnet.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_report_recomputes_identically(tmp_path, config, capsys):
    main(["genapp", "--seed", "2", "--screens", "8", "--out", str(tmp_path / "app.json")])
    _, a = explore(tmp_path, config, "a", "--app", str(tmp_path / "app.json"))
    assert main(["report", "--log", str(a / "run.ndjson"), "--app", str(tmp_path / "app.json"),
                 "--out", str(tmp_path / "r.json")]) == 0
    assert (tmp_path / "r.json").read_bytes() == (a / "report.json").read_bytes()


def test_report_against_wrong_app_fails(tmp_path, config):
    _, a = explore(tmp_path, config, "a")
    main(["genapp", "--seed", "9", "--out", str(tmp_path / "other.json")])
    assert main(["report", "--log", str(a / "run.ndjson"), "--app", str(tmp_path / "other.json")]) == 2


def test_crosscov(tmp_path, config, capsys):
    _, a = explore(tmp_path, config, "a", "--policy", "random")
    _, b = explore(tmp_path, config, "b", "--policy", "monkey")
    capsys.readouterr()
    assert main(["crosscov", "--a", str(a / "report.json"), "--b", str(b / "report.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["screens"]["a_over_b"] <= 1 and out["screens"]["intersection"] >= 1


@pytest.mark.parametrize("argv", [
    ["explore", "--policy", "greedy", "--out-dir", "x"],
    ["nonsense"],
])
def test_usage_errors_exit_one(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_unknown_config_field_exits_one(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"agent": {"speed": 1}}))
    assert main(["explore", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 1


def test_export_and_eval_vision(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["export-corpus", "--apps", "1", "--per-app", "3", "--out-dir", str(corpus)]) == 0
    capsys.readouterr()
    assert main(["eval-vision", "--corpus", str(corpus)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["images"] == 3 and res["f1"] >= 0.9
    assert main(["eval-vision", "--corpus", str(tmp_path)]) == 1  # no screenshots there


def test_bench_small(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"app_seeds": [1], "repetitions": 1, "policies": ["random", "monkey"],
                                 "base": {"budget": 10, **FAST}}))
    assert main(["bench", "--suite", str(suite), "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "b.csv").read_text().count("\n") == 3
    assert "policies" in json.loads((tmp_path / "b.summary.json").read_text())
