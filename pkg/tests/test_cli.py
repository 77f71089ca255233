import csv
import json
import subprocess
import sys

import pytest

from stablemv.cli import FIT_HEADER, run_cli

BASE = {"schema": 1, "alpha": 1.5, "drift": "convolution", "drift_params": {"amp": 0.5},
        "init": {"kind": "uniform", "low": 0.0, "high": 1.0}, "phi": "linear_sin",
        "N_grid": [4, 8, 16, 32], "R": 40, "T": 1.0, "steps": 10, "seed": 3, "n_ref": 4000,
        "ref_iter": 3}

HEADERS = {
    "simulate": {"terminal_atoms.csv": ["particle", "x"],
                 "summary.csv": ["N", "T", "mean", "median", "moment_beta", "phi"]},
    "picard": {"picard_history.csv": ["iter", "sup_dtv", "noise_floor"]},
    "density": {"density.csv": ["y", "p_K", "proxy", "ratio_to_rho0"]},
    "chaos-rate": {"chaos_curve.csv": ["N", "strong_err", "strong_se", "weak_err", "weak_se"],
                   "rate_fit.csv": FIT_HEADER,
                   "mean_field_w1.csv": ["N", "w1", "sampling_floor"]},
    "init-rate": {"init_curve.csv": ["N", "w1", "se"], "rate_fit.csv": FIT_HEADER},
    "verify-bounds": {"bounds.csv": ["check", "params", "value", "limit", "passed"]},
    "flow-constancy": {"flow_constancy.csv": ["phi", "t", "value", "se", "residual",
                                              "combined_se", "passed"]},
}

SECTIONS = {
    "simulate": {"N": 50},
    "picard": {"M": 5000, "steps": 20, "records": 4, "max_iter": 3},
    "density": {"K": 1, "space_step": 0.05, "space_extent": 30.0, "x": 0.0},
    "init_rate": {"N_grid": [16, 32, 64, 128], "R": 40},
    "bounds": {"points": 2000, "quad_n": 200},
    "flow": {"checkpoints": [0.5], "M": 4000, "groups": 10, "dt": 0.1, "n_iter": 2,
             "phis": ["linear_sin"], "allowance": 0.0},
}
SECTION_OF = {"init-rate": "init_rate", "verify-bounds": "bounds", "flow-constancy": "flow"}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def config_for(cmd):
    cfg = dict(BASE)
    sec = SECTION_OF.get(cmd, cmd)
    if sec in SECTIONS:
        cfg[sec] = SECTIONS[sec]
    if cmd == "density":
        cfg["drift"], cfg["drift_params"] = "holder", {"amp": 0.5, "eta": 0.7}
        cfg["init"] = {"kind": "point", "at": 0.0}
    return cfg


@pytest.mark.parametrize("cmd", sorted(HEADERS))
def test_subcommand_outputs(cmd, tmp_path):
    out = tmp_path / "out"
    code = run_cli([cmd, "--config", write(tmp_path, config_for(cmd)), "--out", str(out)])
    assert code == 0
    for name, header in HEADERS[cmd].items():
        with open(out / name) as fh:
            assert next(csv.reader(fh)) == header
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == cmd and man["seed"] == 3
    assert set(HEADERS[cmd]) <= set(man["outputs"])
    assert len(man["config_sha256"]) == 64


def test_missing_config_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert run_cli(["simulate", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus", "--config", "x"], ["simulate"], []])
def test_usage_errors_exit_1(argv):
    assert run_cli(argv) == 1


@pytest.mark.parametrize("patch", [{"schema": 2}, {"R": 5}, {"drift": "nope"}, {"colour": 1},
                                   {"picard": {"Q": 1}}])
def test_invalid_config_exit_1(patch, tmp_path):
    cfg = dict(config_for("picard"), **patch)
    assert run_cli(["picard", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_2(tmp_path):
    cfg = dict(config_for("picard"), picard=dict(SECTIONS["picard"], tol=1e-12))
    assert run_cli(["picard", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_failed_check_exit_3(tmp_path):
    cfg = dict(config_for("flow-constancy"))
    cfg["flow"] = dict(SECTIONS["flow"], allowance=-1.0)
    out = tmp_path / "o"
    assert run_cli(["flow-constancy", "--config", write(tmp_path, cfg), "--out", str(out)]) == 3
    assert (out / "manifest.json").exists()


def test_seed_override(tmp_path):
    p = write(tmp_path, config_for("simulate"))
    run_cli(["simulate", "--config", p, "--out", str(tmp_path / "a"), "--seed", "11"])
    run_cli(["simulate", "--config", p, "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "summary.csv").read_text()
    assert a != (tmp_path / "b" / "summary.csv").read_text()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 11


def test_chaos_rate_thread_determinism(tmp_path):
    p = write(tmp_path, config_for("chaos-rate"))
    for t in (1, 8):
        assert run_cli(["chaos-rate", "--config", p, "--out", str(tmp_path / f"t{t}"),
                        "--threads", str(t)]) == 0
    for name in HEADERS["chaos-rate"]:
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t8" / name).read_bytes()


def test_entry_point_module(tmp_path):
    p = write(tmp_path, config_for("verify-bounds"))
    r = subprocess.run([sys.executable, "-m", "stablemv.cli", "verify-bounds", "--config", p,
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
