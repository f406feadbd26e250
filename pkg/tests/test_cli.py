import json
import subprocess
import sys

import numpy as np
import pytest

from bundlesim.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main
from bundlesim.model import lambda_n
from bundlesim.observables import TimeSeries
from bundlesim.runner import verify_manifest

SHORT = """
name: short
model: {{lambda: {lam}, bundle_N: 2, kappa: {kappa}, gamma: 0.002, n_max: 8}}
pulses: {{amplitude: 0.05, sigma: 180, t1: 1000, t2: 750}}
run: {{mode: {mode}, t_end: 1500, n_points: 31, n_traj: {n_traj}, seed: 5,
       rtol: {rtol}, atol: {atol}, audit: false}}
"""


def write_cfg(tmp_path, name="c.yaml", lam="auto", kappa=0.0006, mode="master", n_traj=0,
              rtol=1e-8, atol=1e-10):
    p = tmp_path / name
    p.write_text(SHORT.format(lam=lam, kappa=kappa, mode=mode, n_traj=n_traj, rtol=rtol, atol=atol))
    return p


def test_lambda_command(capsys):
    assert main(["lambda", "2"]) == EXIT_OK
    assert main(["lambda", "3"]) == EXIT_OK
    out = capsys.readouterr().out.split()
    assert out == ["0.765367", "0.644806"]


@pytest.mark.parametrize("argv", [["lambda", "0"], ["lambda", "x"], ["frobnicate"], []])
def test_usage_errors_exit_2(argv):
    assert main(argv) == EXIT_CONFIG


def test_empty_config_exit_2(tmp_path, capsys):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "model.kappa: missing required field" in err and "run.t_end" in err


def test_unknown_config_and_figure(tmp_path):
    assert main(["run", "--config", "nope", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["reproduce", "7", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--config", "fig1d", "--threads", "0"]) == EXIT_CONFIG


def test_run_writes_manifest_and_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path, mode="both", n_traj=3)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--out", str(b)]) == EXIT_OK
    man = json.loads((a / "manifest.json").read_text())
    names = {e["file"] for e in man["outputs"]}
    assert {"populations.csv", "populations.meta.json", "ensemble_mean.csv", "trajectories.jsonl",
            "summary.json", "populations.svg"} <= names
    assert man["master_seed"] == 5 and "kappa: 0.0006" in man["config"]
    assert verify_manifest(a) == []
    for name in sorted(names):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    text = (a / "populations.csv").read_text()
    assert text.endswith("\n") and "\r" not in text
    (a / "summary.json").write_text("{}\n")
    assert verify_manifest(a) == ["summary.json"]


def test_seed_flag_changes_trajectories(tmp_path):
    cfg = write_cfg(tmp_path, mode="trajectories", n_traj=4)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
    ja = (tmp_path / "a" / "trajectories.jsonl").read_text()
    jb = (tmp_path / "b" / "trajectories.jsonl").read_text()
    assert ja != jb


def test_env_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("BUNDLESIM_OUT", str(tmp_path / "env"))
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "short" / "manifest.json").exists()


def test_invariant_failure_removes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, rtol=0.5, atol=0.5)
    out = tmp_path / "bad"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_INVARIANT
    assert "invariant" in capsys.readouterr().err
    assert list(out.iterdir()) == []


def test_sweep_single_point(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--param", "model.kappa", "--values", "0.0006",
                 "--out", str(out)]) == EXIT_OK
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("value,max_P_g2") and len(rows) == 2
    assert (out / "point_00" / "manifest.json").exists()


def test_sweep_kappa_ordering(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(SHORT.format(lam="auto", kappa=0.0006, mode="master", n_traj=0, rtol=1e-8,
                              atol=1e-10).replace("t_end: 1500", "t_end: 2500"))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(p), "--param", "model.kappa",
                 "--values", "0.0004,0.0006,0.0008", "--out", str(out)]) == EXIT_OK
    rows = [r.split(",") for r in (out / "sweep.csv").read_text().splitlines()[1:]]
    peaks = [float(r[1]) for r in rows]
    assert peaks[0] > peaks[1] > peaks[2]


@pytest.mark.parametrize("param,values", [("model.colour", "1"), ("run.mode", "1"),
                                          ("kappa", "1"), ("model.kappa", "a,b"),
                                          ("model.kappa", ""), ("model.kappa", "-1")])
def test_sweep_bad_arguments(tmp_path, param, values):
    cfg = write_cfg(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--param", param, "--values", values,
                 "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_blocking_needs_lambda_N(tmp_path):
    """At lambda_2 the chain stops at |g,2>; 10% off it the drive climbs further."""
    peaks = {}
    for tag, lam in (("exact", lambda_n(2)), ("off", 0.9 * lambda_n(2))):
        p = tmp_path / f"{tag}.yaml"
        p.write_text(SHORT.format(lam=lam, kappa=0.0, mode="master", n_traj=0, rtol=1e-8,
                                  atol=1e-10).replace("gamma: 0.002", "gamma: 0.0")
                     .replace("t_end: 1500", "t_end: 2000"))
        assert main(["run", "--config", str(p), "--out", str(tmp_path / tag)]) == EXIT_OK
        pops = TimeSeries.from_csv(tmp_path / tag / "populations.csv")
        peaks[tag] = (pops["P_g2"][-1], pops["P_g3"].max())
    assert peaks["exact"][0] > 0.98 and peaks["exact"][1] < 1e-3
    assert peaks["off"][1] > 10 * peaks["exact"][1]
    assert peaks["off"][0] < peaks["exact"][0]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "bundlesim", "lambda", "2"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "0.765367"


def test_reproduce_exit_code_contract():
    assert EXIT_CHECK == 4 and EXIT_INVARIANT == 3


def test_truncation_audit_failure_exit_3(tmp_path, capsys):
    p = tmp_path / "tiny.yaml"
    p.write_text(SHORT.format(lam="auto", kappa=0.0006, mode="master", n_traj=0, rtol=1e-8, atol=1e-10)
                 .replace("n_max: 8", "n_max: 3").replace("audit: false", "audit: true, audit_n_max: 6"))
    out = tmp_path / "tiny"
    assert main(["run", "--config", str(p), "--out", str(out)]) == EXIT_INVARIANT
    assert "truncation audit failed" in capsys.readouterr().err
    assert list(out.iterdir()) == []
