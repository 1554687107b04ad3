import json
import subprocess
import sys

import pytest

from morsedyn import cli
from morsedyn.harness import EnsembleRecord, write_records

SMALL = {
    "network": {"epochs": 10},
    "ensemble": {"cycles": 12},
    "grid": {"initial_depth": 2, "max_depth": 4},
}


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_train_single_cycle(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ensemble": {"cycles": 1}, "network": {"epochs": 2}}))
    out = tmp_path / "out"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "records.jsonl").read_text().splitlines()) == 1
    assert set(_files(out)) == {"records.jsonl", "summary.json", "entropy.csv", "config.resolved.json"}
    echo = json.loads((out / "config.resolved.json").read_text())
    assert echo["ensemble"]["cycles"] == 1 and echo["network"]["layers"] == [4, 1, 3]
    assert (out / "entropy.csv").read_text().splitlines()[0] == "test_point,label,entropy_bits"
    assert len((out / "entropy.csv").read_text().splitlines()) == 31


def test_pipeline_equals_train_then_analyze(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["pipeline", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert cli.main(["train", "--config", str(small_cfg), "--out", str(b)]) == 0
    assert cli.main(["analyze", "--config", str(small_cfg), "--out", str(b), "--records", str(b / "records.jsonl")]) == 0
    assert _files(a) == _files(b)
    names = set(_files(a))
    assert {"grid.json", "map.json", "model.json", "morse.json", "morse.dot", "basins.csv", "report.json"} <= names
    report = json.loads((a / "report.json").read_text())
    assert report["source"]["pairs"] == 12
    assert len(report["source"]["selected_coordinates"]) == 2


def test_thread_count_does_not_change_outputs(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["pipeline", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert cli.main(["pipeline", "--config", str(small_cfg), "--out", str(b), "--threads", "3"]) == 0
    assert _files(a) == _files(b)


def test_seed_override(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["train", "--config", str(small_cfg), "--out", str(a)])
    cli.main(["train", "--config", str(small_cfg), "--out", str(b), "--seed", "5"])
    assert (a / "records.jsonl").read_bytes() != (b / "records.jsonl").read_bytes()
    assert json.loads((b / "config.resolved.json").read_text())["ensemble"]["base_seed"] == 5


def test_analyze_system_report(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["analyze", "--system", "double-well", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["source"] == {"kind": "system", "name": "double-well", "domain": {"lower": [-1.6], "upper": [1.6]}}
    assert report["minimal_nodes"] == 2
    assert report["retraction_present"] is True
    assert report["coverage"]["violations"] == 0
    assert report["clipped_cells"] == 0
    assert not (out / "model.json").exists()


def test_missing_dataset_no_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": {"path": str(tmp_path / "missing.csv")}}))
    out = tmp_path / "out"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_failure_rolls_back_partial_outputs(tmp_path, small_cfg, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("analysis failed")

    monkeypatch.setattr(cli, "analyze_records", boom)
    out = tmp_path / "out"
    assert cli.main(["pipeline", "--config", str(small_cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_all_diverged_records_rejected(tmp_path):
    recs = [EnsembleRecord(k, k, True, [0.0, 0.0], [0.0, 0.0], [0], 0.0) for k in range(3)]
    write_records(tmp_path / "r.jsonl", recs)
    out = tmp_path / "out"
    assert cli.main(["analyze", "--records", str(tmp_path / "r.jsonl"), "--out", str(out)]) == 1
    assert not out.exists()


def test_truncation_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grid": {"initial_depth": 2, "max_depth": 9, "leaf_cap": 50}}))
    out = tmp_path / "o"
    assert cli.main(["analyze", "--system", "saddle", "--config", str(cfg), "--out", str(out)]) == 3
    assert json.loads((out / "report.json").read_text())["truncated"] is True


def test_export_formats(tmp_path, capsys):
    out = tmp_path / "o"
    cli.main(["analyze", "--system", "contraction", "--out", str(out)])
    capsys.readouterr()
    for fmt, name in (("json", "morse.json"), ("dot", "morse.dot"), ("csv", "basins.csv")):
        assert cli.main(["export", str(out / "morse.json"), "--format", fmt]) == 0
        assert capsys.readouterr().out == (out / name).read_text()


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["export", "x.json", "--format", "xml"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--system", "lorenz"])
    assert exc.value.code == 1


def test_validate_config(tmp_path, capsys):
    assert cli.main(["validate-config"]) == 0
    assert json.loads(capsys.readouterr().out)["network"]["epochs"] == 150
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"leaf_cap": 0}}))
    assert cli.main(["validate-config", "--config", str(bad)]) == 1
    assert "grid.leaf_cap" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "morsedyn", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "validate-config" in proc.stdout
