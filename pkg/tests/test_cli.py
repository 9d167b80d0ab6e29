import json

import pytest

from cogslice.cli import EXIT_ERROR, EXIT_FALLBACK, EXIT_OK, file_digest, main, replay
from cogslice.ingest import GeneratorConfig, default_scenarios


def _small_config(path, p_spike=0.0):
    cfg = GeneratorConfig(scenarios=default_scenarios(samples=400)).to_dict()
    cfg["corruption"]["spike_probability"] = p_spike
    path.write_text(json.dumps(cfg))
    return str(path)


def _pipeline(root, gen_args=(), pre_args=(), model="all"):
    gen = _small_config(root / "gen.json", 0.02)
    train = root / "train.json"
    train.write_text(json.dumps({"forest_trees": 5, "gbt_trees": 10}))
    steps = [
        ["generate", "--config", gen, "--seed", "4", "--out", f"{root}/trace.jsonl", *gen_args],
        ["ingest", "--trace", f"{root}/trace.jsonl", "--kb", f"{root}/kb"],
        ["preprocess", "--in", f"{root}/trace.jsonl", "--out", f"{root}/clean.csv", "--report", f"{root}/repair.json", *pre_args],
        ["features", "--in", f"{root}/clean.csv", "--out", f"{root}/feat"],
        ["train", "--features", f"{root}/feat", "--model", model, "--out", f"{root}/models", "--seed", "1", "--config", str(train)],
    ]
    for argv in steps:
        assert main(argv) == EXIT_OK, argv
    return root


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = _pipeline(tmp_path_factory.mktemp("cli"))
    assert main(["combine", "--models", f"{root}/models", "--features", f"{root}/feat", "--step", "10"]) == EXIT_OK
    return root


def test_usage_errors_exit_one(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)  # manifests without an output anchor land in ./runs
    assert main([]) == EXIT_ERROR
    assert main(["train", "--features", "x"]) == EXIT_ERROR
    assert main(["preprocess", "--in", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "o.csv")]) == EXIT_ERROR
    assert main(["anomaly", "--fit", "k=two", "--windows", str(tmp_path / "w.jsonl"), "--seed", "0"]) == EXIT_ERROR


def test_help_lists_phases(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for name in ("generate", "preprocess", "train", "run-pcs", "report"):
        assert name in out


def test_pipeline_artifacts(run_dir):
    for name in ("lasso", "elasticnet", "forest", "gbt", "combined"):
        assert (run_dir / "models" / f"{name}.json").is_file()
    weights = json.loads((run_dir / "models" / "weights.json").read_text())
    assert sum(weights["weights"].values()) == 100
    assert (run_dir / "feat" / "feature_set.json").is_file()


def test_manifest_records_run(run_dir):
    manifests = sorted((run_dir / "models" / "runs").glob("train-*.json"))
    assert manifests
    m = json.loads(manifests[0].read_text())
    assert m["command"][0] == "train" and m["exit_code"] == 0
    assert m["seeds"] and m["config_digests"]["train"]
    for path, digest in m["outputs"].items():
        assert file_digest(path) == digest


def test_evaluate_and_report(run_dir, capsys):
    code = main(["evaluate", "--models", f"{run_dir}/models", "--features", f"{run_dir}/feat", "--kb", f"{run_dir}/kb"])
    out = capsys.readouterr().out
    assert code in (EXIT_OK, EXIT_FALLBACK)
    assert "verdict:" in out
    assert main(["report", "--kb", f"{run_dir}/kb"]) == EXIT_OK
    table = capsys.readouterr().out
    for col in ("model", "accuracy", "rmse", "mape"):
        assert col in table.lower()


def test_replay_reproduces_outputs(run_dir):
    m = sorted((run_dir / "feat" / "runs").glob("features-*.json"))[0]
    assert all(replay(m).values())


def test_outputs_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _pipeline(tmp_path / "a", model="lasso")
    b = _pipeline(tmp_path / "b", model="lasso")
    for rel in ("trace.jsonl", "clean.csv", "feat/train.csv", "models/lasso.json"):
        assert file_digest(a / rel) == file_digest(b / rel), rel


def test_fallback_verdict_exits_two(tmp_path, capsys):
    root = _pipeline(tmp_path, pre_args=("--no-spike-repair",), model="lasso")
    code = main(["evaluate", "--models", f"{root}/models", "--features", f"{root}/feat"])
    out = capsys.readouterr().out
    assert code == EXIT_FALLBACK
    assert "verdict: fallback_phase2" in out


def test_repaired_trace_accepted(tmp_path, capsys):
    root = _pipeline(tmp_path, model="lasso")
    assert main(["evaluate", "--models", f"{root}/models", "--features", f"{root}/feat"]) == EXIT_OK
    assert "verdict: accept" in capsys.readouterr().out


def test_run_pcs_reactive(tmp_path):
    out = tmp_path / "pcs"
    assert main(["run-pcs", "--scenario", "benign", "--controller", "reactive", "--ticks", "30", "--seed", "0", "--out", str(out)]) == EXIT_OK
    ledger = json.loads((out / "ledger.json").read_text())
    assert ledger["sla"]
