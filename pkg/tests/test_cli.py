import json
import math

import pytest

from quantflow import cli, experiments
from quantflow.errors import StiffnessError


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, json.loads((out / "report.json").read_text()), out


def test_quantize1d_small(tmp_path):
    code, rep, out = run(tmp_path, "quantize1d", "--set", "N=[8,16,32]", "--set", "density=cosine:0.5",
                         "--set", "init=perturbed:0.3")
    assert code == 0 and rep["passed"]
    assert rep["exit_code"] == 0
    assert {"trajectory_N8.csv", "summary.csv"} <= set(rep["files"])
    assert (out / "summary.csv").exists()
    assert rep["config"]["N"] == [8, 16, 32]
    assert rep["wall_time_s"] > 0


def test_threshold_failure_exit_code(tmp_path):
    code, rep, _ = run(tmp_path, "quantize1d", "--set", "N=[4,8,16]", "--set", "density=cosine:0.5",
                       "--set", "slope_target=5.0")
    assert code == 2
    assert rep["passed"] is False and rep["checks"]["W1_slope"] is False


@pytest.mark.parametrize("args", [
    ["quantize1d", "--set", "bogus=1"],
    ["quantize1d", "--set", "density=triangle"],
    ["quantize1d", "--set", "N=abc"],
    ["hessian-cx", "--set", "eps=[0.3]"],
    ["manifold-moment", "--set", "space=spherical"],
])
def test_input_errors(tmp_path, args):
    code, rep, _ = run(tmp_path, *args)
    assert code == 3
    assert rep["error"]["kind"] == "input"


def test_numerical_abort_is_reported(tmp_path, monkeypatch):
    def boom(p, out, jobs):
        raise StiffnessError("step size underflow at t=1", 7)

    monkeypatch.setitem(experiments.RUNNERS, "manifold-moment", boom)
    code, rep, _ = run(tmp_path, "manifold-moment")
    assert code == 4
    assert rep["error"]["kind"] == "numerical" and rep["error"]["index"] == 7


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "m.yaml"
    cfg.write_text("space: euclidean\nd: 2\nprofile: gaussian\nr: 2.0\ndelta: 1.0\nexpect: finite\n")
    code, rep, _ = run(tmp_path, "manifold-moment", "--config", str(cfg))
    assert code == 0 and rep["metrics"]["verdict"] == "finite"
    assert rep["metrics"]["moment_value"] == pytest.approx(3 * math.sqrt(math.pi / 2), rel=1e-9)
    code, rep, _ = run(tmp_path, "manifold-moment", "--config", str(cfg), "--set", "expect=divergent (both)",
                       name="o2")
    assert code == 2


def test_nested_config_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("density:\n  kind: cosine\n  eps: 0.1\n")
    assert cli.main(["quantize1d", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    assert "nested" in capsys.readouterr().err


def test_scientific_notation_override(tmp_path):
    code, rep, _ = run(tmp_path, "quantize1d", "--set", "N=6", "--set", "gtol=1e-9", "--set", "t_end=2e3")
    assert code == 0 and rep["config"]["gtol"] == 1e-9


def test_outputs_are_reproducible(tmp_path):
    args = ["quantize1d", "--set", "N=[6,12]", "--set", "init=perturbed:0.3", "--seed", "3"]
    _, _, a = run(tmp_path, *args, name="a")
    _, _, b = run(tmp_path, *args, "--jobs", "2", name="b")
    for f in ("trajectory_N6.csv", "trajectory_N12.csv", "summary.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_manifold_contrast(tmp_path):
    code, rep, _ = run(tmp_path, "manifold-moment", "--set", "contrast=true")
    assert code == 0
    assert rep["metrics"]["slow"]["verdict"] == "divergent (A-term)"


def test_hessian_small(tmp_path):
    code, rep, out = run(tmp_path, "hessian-cx", "--set", "eps=[0.1]", "--set", "delta=[1e-3,1e-4]",
                         "--set", "M=4096", "--set", "rel_tol=0.2")
    assert code == 0
    assert rep["checks"]["negative[0.1]"]
    assert all((out / f).exists() for f in rep["files"])


def test_pde1d_small(tmp_path):
    code, rep, _ = run(tmp_path, "pde1d", "--set", "M=64", "--set", "t_end=0.05",
                       "--set", "stationary_grids=[32,64]")
    assert code == 0
    assert rep["checks"]["comparison"] and rep["checks"]["mass"]


def test_closeness_small(tmp_path):
    code, rep, _ = run(tmp_path, "closeness", "--set", "N=[8,16,32]", "--set", "densities=[uniform]",
                       "--set", "M=512", "--set", "T=0.1", "--set", "times=3", "--set", "slope_tol=1.0")
    assert code == 0, rep.get("metrics")


def test_lattice_and_calibration_small(tmp_path):
    code, rep, _ = run(tmp_path, "lattice2d", "--set", "n=4", "--set", "amplitude=0.01", "--set", "max_iter=80",
                       "--set", "G=16", "--set", "t_end=0.01", "--set", "record_every=5")
    assert code == 0, rep["checks"]
    code, rep, _ = run(tmp_path, "calibrate2d", "--set", "n=[2,3,4]", "--set", "method=voronoi",
                       "--set", "samples=100", name="cal")
    assert code == 0
    assert "n^-2" in rep["metrics"]["conclusion"]
