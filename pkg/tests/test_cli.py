import io
import json
import subprocess
import sys

import pytest
import yaml

from pointnls.cli import main
from pointnls.io import read_csv

SMALL = {
    "grid": {"L": 8.0, "M": 1024},
    "defects": [{"y": 0.0, "mu": 0.5, "potential": {"kind": "gaussian", "params": {"alpha": 1.0}}}],
    "psi0": {"kind": "gaussian"},
    "T": 0.05, "dt": 1e-3, "outputs": 2,
    "ladder": [0.4, 0.2, 0.125],
}


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def error_record(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture
def cfg_file(tmp_path):
    def make(**extra):
        cfg = dict(SMALL, **extra)
        p = tmp_path / "problem.cfg"
        p.write_text(yaml.safe_dump(cfg))
        return p
    return make


def test_unknown_subcommand():
    code, _, err = run("frobnicate")
    assert code == 2
    assert "usage:" in err
    assert error_record(err)["error"] == "usage"


def test_no_subcommand():
    code, _, err = run()
    assert code == 2 and "usage:" in err


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "converge" in capsys.readouterr().out


def test_self_test():
    code, out, _ = run("self-test")
    assert code == 0
    assert "FAIL" not in out
    assert out.strip().splitlines()[-1].endswith("checks passed")


def test_run_scaled_outputs(cfg_file, tmp_path):
    out_dir = tmp_path / "scaled"
    code, out, _ = run("run-scaled", "--config", str(cfg_file()), "--epsilon", "0.2", "--out", str(out_dir))
    assert code == 0, out
    assert "eps=0.2" in out
    rows = read_csv(out_dir / "trajectory.csv")
    assert len(rows) == 51
    assert (out_dir / "conservation.png").stat().st_size > 0
    assert (out_dir / "final.png").exists()
    assert sorted(p.name for p in (out_dir / "snapshots").iterdir()) == ["psi_000.bin", "psi_001.bin"]


def test_overrides_echoed(cfg_file, tmp_path):
    out_dir = tmp_path / "scaled"
    code, _, _ = run("run-scaled", "--config", str(cfg_file()), "--epsilon", "0.25", "--dt", "5e-3",
                     "--T", "0.02", "--out", str(out_dir), "--no-plots")
    assert code == 0
    resolved = yaml.safe_load((out_dir / "resolved_config.yaml").read_text())
    assert resolved["epsilon"] == 0.25 and resolved["dt"] == 5e-3 and resolved["T"] == 0.02
    assert resolved["solver"]["max_iter"] == 200
    assert not (out_dir / "final.png").exists()


def test_run_point_outputs(cfg_file, tmp_path):
    out_dir = tmp_path / "point"
    code, out, _ = run("run-point", "--config", str(cfg_file()), "--out", str(out_dir))
    assert code == 0
    assert "jump residual" in out
    assert len(read_csv(out_dir / "charges.csv")) == 51
    assert len(read_csv(out_dir / "summary.csv")) == 2
    assert (out_dir / "conservation.png").exists()


def test_converge_small(cfg_file, tmp_path):
    out_dir = tmp_path / "conv"
    code, out, _ = run("converge", "--config", str(cfg_file()), "--out", str(out_dir), "--serial")
    assert code == 0
    assert "pointwise" in out
    for name in ("ladder.csv", "fits.csv", "report.txt", "ladder.png", "traces.png", "resolved_config.yaml"):
        assert (out_dir / name).exists(), name


def test_focusing_inadmissible(cfg_file, tmp_path):
    bad = [{"y": 0.0, "mu": 1.5, "potential": {"kind": "gaussian", "params": {"alpha": -1.0}}}]
    code, _, err = run("run-point", "--config", str(cfg_file(defects=bad)), "--out", str(tmp_path / "x"))
    assert code == 2
    rec = error_record(err)
    assert rec["error"] == "config" and "mu < 1" in rec["message"]


def test_blow_up_is_solver_error(cfg_file, tmp_path):
    bad = [{"y": 0.0, "mu": 1.5, "potential": {"kind": "gaussian", "params": {"alpha": -5.0}}}]
    path = cfg_file(defects=bad, psi0={"kind": "gaussian", "params": {"amplitude": 3.0}}, T=0.5,
                    solver={"guard_factor": 1.2})
    code, _, err = run("run-scaled", "--config", str(path), "--epsilon", "0.4", "--allow-inadmissible",
                       "--out", str(tmp_path / "x"), "--no-plots")
    assert code == 3
    rec = error_record(err)
    assert rec["error"] == "solver" and rec["type"] == "BlowUpError" and rec["t"] > 0


def test_bad_config_file(tmp_path):
    p = tmp_path / "broken.cfg"
    p.write_text("grid: {L: 8}\n")
    code, _, err = run("run-point", "--config", str(p))
    assert code == 2 and error_record(err)["error"] == "config"
    code, _, err = run("run-point", "--config", str(tmp_path / "missing.cfg"))
    assert code == 2


def test_bad_override_value():
    code, _, err = run("run-scaled", "--epsilon", "small")
    assert code == 2 and error_record(err)["error"] == "usage"


def test_validate_domain_flags_tiny_box(cfg_file, tmp_path):
    path = cfg_file(grid={"L": 1.5, "M": 256}, ladder=[0.125], T=0.5, dt=5e-3)
    code, out, _ = run("validate-domain", "--config", str(path), "--out", str(tmp_path / "d"))
    assert code == 1 and "increase L" in out
    assert (tmp_path / "d" / "domain.txt").exists()


def test_self_converge(cfg_file, tmp_path):
    path = cfg_file(grid={"L": 8.0, "M": 512}, ladder=[0.5], dt=2.5e-3)
    code, out, _ = run("self-converge", "--config", str(path), "--levels", "3", "--out", str(tmp_path / "s"))
    assert code == 0, out
    assert (tmp_path / "s" / "self_convergence.png").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pointnls.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2


@pytest.mark.slow
def test_converge_canonical(tmp_path):
    out_dir = tmp_path / "canon"
    code, out, err = run("converge", "--config", "configs/canonical.cfg", "--out", str(out_dir), "--no-plots")
    assert code == 0, err
    rows = read_csv(out_dir / "ladder.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.2, 0.1, 0.05, 0.025]
    assert len(list((out_dir / "snapshots").iterdir())) == 5
