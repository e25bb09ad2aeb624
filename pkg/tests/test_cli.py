import json
from pathlib import Path

import pytest

from teleop_predictor.cli import main
from teleop_predictor.config import ExperimentConfig
from teleop_predictor.data_io import read_trial_csv
from teleop_predictor.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMOKE = CONFIGS / "smoke.json"


def files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_usage_errors(tmp_path, capsys):
    assert main(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 0, "nonsense": 1}')
    assert main(["train", "--config", str(bad)]) == 2
    assert main(["evaluate", "--config", str(SMOKE), "--out", str(tmp_path / "e")]) == 2


def test_runtime_error_exit_code(tmp_path):
    ckpt = tmp_path / "broken.ckpt"
    ckpt.write_text("not a checkpoint\n")
    assert main(["evaluate", "--config", str(SMOKE), "--checkpoint", str(ckpt), "--out", str(tmp_path / "e")]) == 1


def test_gen_synthetic_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-synthetic", "--n", "100", "--seed", "1", "--out", str(tmp_path / name)]) == 0
    a, b = files(tmp_path / "a" / "trials"), files(tmp_path / "b" / "trials")
    assert a == b and len(a) == 20
    trial = read_trial_csv(tmp_path / "a" / "trials" / "synthetic-000.csv")
    assert len(trial) == 100
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["command"] == "gen-synthetic"
    assert set(manifest["versions"]) == {"python", "numpy", "teleop_predictor"}


def test_simulate_and_csv_source(tmp_path):
    assert main(["gen-synthetic", "--config", str(SMOKE), "--out", str(tmp_path / "g")]) == 0
    cfg = ExperimentConfig.load(SMOKE).to_dict()
    cfg["data"] = {"source": "csv", "paths": [str(tmp_path / "g" / "trials")]}
    path = tmp_path / "csv.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "s")]) == 0
    stats = json.loads((tmp_path / "s" / "channel_stats.json").read_text())
    assert len(stats["loss_rate"]) == 6
    assert len(list((tmp_path / "s" / "traces").glob("*.csv"))) == 6
    assert len(list((tmp_path / "s" / "corrupted").glob("*.csv"))) == 6


def test_train_then_evaluate(tmp_path):
    out = tmp_path / "t"
    assert main(["train", "--config", str(SMOKE), "--kind", "lstm", "--out", str(out)]) == 0
    report = json.loads((out / "train_report.json").read_text())
    assert report["kind"] == "lstm" and len(report["epochs"]) >= 1 and "wall_time_s" in report
    ev = tmp_path / "e"
    assert main(["evaluate", "--config", str(SMOKE), "--checkpoint", str(out / "lstm.ckpt"), "--out", str(ev)]) == 0
    rep = json.loads((ev / "eval_report.json").read_text())
    assert abs(rep["rmse"] ** 2 - rep["mse"]) <= 1e-12
    lines = (ev / "overlay.csv").read_text().splitlines()
    assert lines[0] == "t,axis,truth,received,predicted,lost" and (len(lines) - 1) % 3 == 0
    # the manifest alone repeats the evaluation
    again = tmp_path / "e2"
    assert main(["evaluate", "--config", str(ev / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "eval_report.json").read_bytes() == (ev / "eval_report.json").read_bytes()


def test_compare_schema_and_manifest_rerun(tmp_path):
    first = tmp_path / "c1"
    assert main(["compare", "--config", str(SMOKE), "--out", str(first)]) == 0
    lines = (first / "comparison.csv").read_text().splitlines()
    assert lines[0] == "model,mse,mae,rmse"
    assert sorted(line.split(",")[0] for line in lines[1:]) == ["informer", "lstm", "rnn", "tcn"]
    summary = json.loads((first / "comparison.json").read_text())
    assert set(summary["param_counts"]) == {"informer", "lstm", "rnn", "tcn"}
    second = tmp_path / "c2"
    assert main(["compare", "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
    a, b = files(first), files(second)
    for name in a:
        if name not in ("timings.json", "manifest.json"):
            assert a[name] == b[name], name
    ma = json.loads(a["manifest.json"])
    mb = json.loads(b["manifest.json"])
    assert {k: v for k, v in ma["outputs"].items() if k not in ma["timing_outputs"]} == \
        {k: v for k, v in mb["outputs"].items() if k not in mb["timing_outputs"]}


def test_flags_override_config():
    cfg = ExperimentConfig.load(SMOKE).override(seed=9, out="elsewhere")
    assert cfg.seed == 9 and str(cfg.out) == "elsewhere" and cfg.model_seeds == [9, 10, 11]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"data": {}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 0, "data": {"source": "jigsaws", "paths": ["/nonexistent/x.txt"]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 0, "models": {"lstm": {"pred_len": 3}}})
