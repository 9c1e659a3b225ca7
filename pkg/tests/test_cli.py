import json
import subprocess
import sys

import pytest

from gatelab.cli import main

def test_help_and_version(capsys):
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0
    assert main(["--version"]) == 0
    assert "gatelab" in capsys.readouterr().out

def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["bogus"]) == 2
    assert main(["train", "--nope"]) == 2
    assert main(["train", "--set", "net.bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["train", "--seed", "1", "--seeds", "1..2", "--out", str(tmp_path)]) == 2
    assert main(["train", "--jobs", "0", "--out", str(tmp_path)]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2

def test_runtime_error_exit_1(tmp_path, capsys):
    code = main(["train", "--set", "data.kind=csv", "--set", f"data.path={tmp_path / 'x.csv'}",
                 "--set", "data.d_in=1", "--out", str(tmp_path)])
    assert code == 1
    assert "error" in capsys.readouterr().err

def test_info(capsys):
    assert main(["info", "--set", "net.d=7"]) == 0
    out = capsys.readouterr().out
    assert "net.d = 7" in out and "soft_galu" in out

def test_train_writes_csv_svg_and_manifest(tmp_path):
    out = tmp_path / "run"
    args = ["train", "--set", "net.w=10", "--set", "net.d=3", "--set", "data.n=5", "--set", "opt.steps=4",
            "--set", "opt.snapshot_every=2", "--format", "csv+svg", "--out", str(out)]
    assert main(args) == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "step,loss,residual_ratio,nu,rho_max,rho_min"
    assert (out / "trajectory.svg").read_text().startswith("<svg")
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["command"] == "train" and doc["seeds"] == [0]
    assert set(doc["outputs"]) == {"trajectory.csv", "trajectory.svg"}

def test_manifest_replay_is_byte_identical(tmp_path):
    first = tmp_path / "a"
    assert main(["gram-trace", "--seeds", "0..3", "--set", "sweep.depths=2 3", "--set", "sweep.widths=20",
                 "--set", "data.n=4", "--out", str(first)]) == 0
    second = tmp_path / "b"
    assert main(["gram-trace", "--manifest", str(first / "manifest.json"), "--jobs", "2",
                 "--out", str(second)]) == 0
    assert (first / "gram_trace.csv").read_bytes() == (second / "gram_trace.csv").read_bytes()
    assert main(["train", "--manifest", str(first / "manifest.json"), "--out", str(tmp_path / "c")]) == 2

def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GATELAB_OUT", str(tmp_path / "env"))
    assert main(["conv-invariance", "--set", "conv.draws=20"]) == 0
    assert (tmp_path / "env" / "conv_invariance.csv").exists()

def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny sweep\ntrain.mode = sweep\nsweep.depths = 2 3\nsweep.widths = 10\n"
                   "data.n = 5\nopt.steps = 3\n")
    assert main(["train", "--config", str(cfg), "--seeds", "0..1", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "convergence.csv").read_text().splitlines()
    assert lines[0].startswith("d,w,step,mean_ratio")
    assert len(lines) == 1 + 2 * 4
    doc = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert str(cfg) in doc["inputs"]

def test_oracle_and_theory_exit_codes(tmp_path):
    assert main(["oracle-check", "--grid", "tiny", "--out", str(tmp_path / "o")]) == 0
    assert main(["theory-check", "--seeds", "0..9", "--set", "net.w=50", "--set", "net.d=3",
                 "--set", "data.n=5", "--out", str(tmp_path / "t")]) in (0, 1)
    assert (tmp_path / "t" / "theory_check.csv").exists()

def test_remaining_commands(tmp_path):
    small = ["--set", "net.w=6", "--set", "net.d=3", "--set", "data.n=8", "--set", "data.d_in=3",
             "--set", "opt.steps=2", "--set", "opt.snapshot_every=1"]
    assert main(["nu-track", *small, "--set", "net.variant=soft_galu", "--out", str(tmp_path / "n")]) == 0
    assert main(["gate-compare", *small, "--out", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "gates.csv").read_text().startswith("example,layer,node,G,active,sensitive,max_dG")
    assert main(["dln", "--seeds", "0..1", "--set", "sweep.depths=2", "--set", "sweep.widths=10",
                 "--set", "opt.steps=3", "--out", str(tmp_path / "d")]) == 0
    assert main(["spectrum", "--seeds", "0..1", "--set", "sweep.depths=2", "--set", "sweep.widths=10",
                 "--set", "data.n=4", "--out", str(tmp_path / "s")]) == 0

def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "gatelab.cli", "info"], capture_output=True, text=True)
    assert res.returncode == 0 and "gatelab" in res.stdout
