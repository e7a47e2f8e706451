import csv
import json
from pathlib import Path

import pytest

from kmspc.cli import main

OPT_FLAGS = ["--iterations", "15"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--kind", "mean_step", "--d", "6", "--seed", "2",
                 "--n-normal", "120", "--n-faulty", "120", "--n-before", "60",
                 "--n-after", "60", "--out", str(out)]) == 0
    return out


def _strip_wall_ms(path: Path) -> list:
    rows = list(csv.reader(path.open()))
    k = rows[0].index("wall_ms")
    return [r[:k] + r[k + 1:] for r in rows]


def _snapshot(out: Path) -> dict:
    snap = {}
    for p in sorted(out.iterdir()):
        if p.name == "timings.json":
            continue
        snap[p.name] = _strip_wall_ms(p) if p.name == "trace.csv" else p.read_bytes()
    return snap


def test_synth_writes_config_and_data(synth_dir):
    cfg = json.loads((synth_dir / "run_config.json").read_text())
    assert cfg["onset"] == 61
    assert (synth_dir / "normal.csv").read_text().startswith("x01,")
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth" and "numpy" in manifest["versions"]


def test_calibrate_and_monitor_self_consistency(synth_dir, tmp_path, capsys):
    cal = tmp_path / "cal"
    assert main(["calibrate", "--config", str(synth_dir / "run_config.json"), "--model", "pca",
                 "--out", str(cal)]) == 0
    for name in ("model.json", "calibration_chart.csv", "calibration_chart.svg",
                 "manifest.json", "timings.json"):
        assert (cal / name).is_file()
    mon = tmp_path / "mon"
    assert main(["monitor", "--model-path", str(cal / "model.json"),
                 "--test", str(synth_dir / "normal.csv"), "--out", str(mon)]) == 0
    report = json.loads((mon / "report.json").read_text())
    assert report["onset"] == 121
    assert report["cmr"]["t2"]["eta_faulty"] is None
    assert 0.0 <= report["cmr"]["t2"]["loss"] <= 0.03
    assert "no faulty samples" in capsys.readouterr().out


def test_optimize_monitor_report_pipeline(synth_dir, tmp_path, capsys):
    runs = tmp_path / "runs"
    assert main(["optimize", "--config", str(synth_dir / "run_config.json"), *OPT_FLAGS,
                 "--out", str(runs / "opt")]) == 0
    result = json.loads((runs / "opt" / "optim_result.json").read_text())
    assert result["method"] == "kernel_flows" and len(result["trace"]["loss"]) == 15
    assert main(["monitor", "--config", str(synth_dir / "run_config.json"),
                 "--model-path", str(runs / "opt" / "model.json"),
                 "--out", str(runs / "mon"), "--log-scale"]) == 0
    report = json.loads((runs / "mon" / "report.json").read_text())
    assert set(report["detection_delay"]) == {"t2", "spex", "combined"}
    assert "log10(T2)" in (runs / "mon" / "chart.svg").read_text()
    (runs / "orphan").mkdir()
    (runs / "orphan" / "report.json").write_text("{}")
    capsys.readouterr()
    assert main(["report", str(runs)]) == 0
    text = capsys.readouterr().out
    assert "missing manifest" in text and "orphan" in text
    rows = list(csv.DictReader((runs / "summary.csv").open()))
    assert [r["run"] for r in rows] == ["mon", "opt"]
    assert rows[0]["cmr_spex"] != "" and rows[1]["final_loss"] != ""


@pytest.mark.parametrize("method", ["line_search", "nelder_mead", "ga"])
def test_baseline_methods(synth_dir, tmp_path, method):
    out = tmp_path / method
    cfg = tmp_path / "cfg.json"
    base = json.loads((synth_dir / "run_config.json").read_text())
    base = {k: (str(synth_dir / v) if k in ("normal", "faulty", "test") else v)
            for k, v in base.items()}
    base["optimizer"] = {"generations": 3, "population": 10, "max_evals": 30}
    cfg.write_text(json.dumps(base))
    assert main(["optimize", "--config", str(cfg), "--method", method, "--out", str(out)]) == 0
    result = json.loads((out / "optim_result.json").read_text())
    assert result["theta_opt"][0] > 0
    assert (out / "model.json").is_file()


def test_rerun_is_byte_identical(synth_dir, tmp_path):
    out = tmp_path / "det"
    args = ["optimize", "--config", str(synth_dir / "run_config.json"), *OPT_FLAGS,
            "--out", str(out)]
    assert main(args) == 0
    first = _snapshot(out)
    assert main(args) == 0
    assert _snapshot(out) == first
    # the manifest is itself a valid config for re-running
    out2 = tmp_path / "det2"
    assert main(["optimize", "--config", str(out / "manifest.json"), "--out", str(out2)]) == 0
    assert (out2 / "model.json").read_bytes() == (out / "model.json").read_bytes()


def test_flags_override_config(synth_dir, tmp_path):
    out = tmp_path / "h2"
    assert main(["calibrate", "--config", str(synth_dir / "run_config.json"), "--H", "2",
                 "--kernel", "cauchy", "--sigma", "2.5", "--out", str(out)]) == 0
    doc = json.loads((out / "model.json").read_text())
    assert doc["H"] == 2 and doc["kernel"]["family"] == "cauchy"
    assert doc["kernel"]["sigma"] == 2.5


def test_exit_codes(synth_dir, tmp_path, capsys):
    cfg = str(synth_dir / "run_config.json")
    assert main(["calibrate", "--config", cfg, "--H", "500", "--out", str(tmp_path / "a")]) == 2
    assert "fit:" in capsys.readouterr().err
    assert main(["optimize", "--normal", str(synth_dir / "normal.csv"), "--seed", "0",
                 "--out", str(tmp_path / "b")]) == 2
    assert not (tmp_path / "b").exists()
    assert main(["calibrate", "--normal", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "c")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    assert main(["calibrate", "--normal", str(bad), "--out", str(tmp_path / "d")]) == 2
    dup = tmp_path / "dup.csv"
    dup.write_text("1,2\n1,2\n1,2\n2,3\n")
    # rank-deficient normal data: requesting more components than the rank
    assert main(["calibrate", "--normal", str(dup), "--model", "pca", "--H", "2",
                 "--out", str(tmp_path / "e")]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["calibrate", "--config", cfg, "--out", str(blocker / "sub")]) == 4


def test_optimize_requires_seed(synth_dir, tmp_path):
    cfg = tmp_path / "noseed.json"
    base = json.loads((synth_dir / "run_config.json").read_text())
    base.pop("seed")
    base = {k: (str(synth_dir / v) if k in ("normal", "faulty", "test") else v)
            for k, v in base.items()}
    cfg.write_text(json.dumps(base))
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
