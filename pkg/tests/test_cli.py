import csv
import json

import numpy as np
import pytest

from czlab import cli
from czlab.meshdisc import read_binary

QUICK_SWEEP = {"sweep": {"h": 0.025, "deltas": [0.2, 0.1]}}


def run(tmp_path, command, config=None, *extra):
    args = [command, "--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return cli.main(args + list(extra))


def load(tmp_path, name):
    return json.loads((tmp_path / "out" / name).read_text())


def test_build_paraboloid(tmp_path):
    assert run(tmp_path, "build", {"standard": {"K": 0}}) == 0
    cert = load(tmp_path, "certificate.json")
    curv = load(tmp_path, "curvature.json")
    assert cert["min_hessian_eigenvalue"] == pytest.approx(2.0)
    assert curv["curvature_at_ball_center"] == pytest.approx(4.0)
    assert 0 < curv["min_sectional_curvature"] < 4.0  # decays away from the origin
    assert load(tmp_path, "spec.json")["bumps"] == []


def test_build_rejects_overlapping_bumps(tmp_path, capsys):
    spec = {"n": 2, "ball": {"center": [0, 0], "radius": 3},
            "bumps": [{"center": [0, 0], "radius": 0.5, "amplitude": 0.01},
                      {"center": [0.6, 0], "radius": 0.5, "amplitude": 0.005}]}
    assert run(tmp_path, "build", {"spec": spec}) == 2
    assert "overlap" in capsys.readouterr().err


def test_build_certificate_failure(tmp_path):
    assert run(tmp_path, "build", {"standard": {"eta0": 5.0}, "certificate": {"per_axis": 61}}) == 4


def test_build_is_deterministic(tmp_path):
    texts = []
    for k in range(2):
        assert cli.main(["build", "--out", str(tmp_path / str(k)), "--seed", "11"]) == 0
        texts.append((tmp_path / str(k) / "spec.json").read_bytes())
    assert texts[0] == texts[1]
    assert json.loads(texts[0])["seed"] == 11


def test_sweep_quick(tmp_path):
    assert run(tmp_path, "sweep", {**QUICK_SWEEP, "baseline": True}) == 0
    rows = list(csv.reader((tmp_path / "out" / "sweep.csv").open()))
    assert len(rows) == 3 and rows[0][0] == "delta"
    summary = load(tmp_path, "summary.json")
    assert summary["records"] == 2 and "baseline_ratio" in summary
    assert "time" not in json.dumps(summary)


def test_sweep_rejects_p_equal_n(tmp_path, capsys):
    assert run(tmp_path, "sweep", {"sweep": {"p": 2}}) == 2
    assert "p must exceed n" in capsys.readouterr().err


def test_sweep_empty_schedule(tmp_path):
    assert run(tmp_path, "sweep", {"sweep": {"deltas": []}}) == 0
    assert (tmp_path / "out" / "sweep.csv").read_text().strip().count("\n") == 0


def test_sweep_gate_failure(tmp_path):
    assert run(tmp_path, "sweep", {"sweep": {"h": 0.025, "deltas": [0.2], "eta0": 2000.0}}) == 4


def test_warp_fixture_passes(tmp_path):
    assert run(tmp_path, "warp") == 0
    s = load(tmp_path, "warp_summary.json")
    assert s["passed"] and s["min_margin"] >= 0
    assert len(s["anchors"]) == 3
    assert (tmp_path / "out" / "bound.csv").read_text().startswith("t,Sect_rad,Sect_tg,lambda,margin")
    assert "sigma" in load(tmp_path, "spliced.json")


def test_warp_infeasible(tmp_path):
    assert run(tmp_path, "warp", {"bound": {"kind": "constant", "scale": 0.0}}) == 5


def test_warp_bound_violation(tmp_path):
    # declared kappa understates the fixture's curvature, so the bound check fails
    config = {"kappa": [0.1, 0.1, 0.1], "bound": {"kind": "constant", "scale": 0.2}}
    assert run(tmp_path, "warp", config) == 1
    assert not load(tmp_path, "warp_summary.json")["passed"]


def test_poisson_and_norms(tmp_path):
    config = {"function": {"kind": "flat"}, "grid": {"center": [0, 0], "radius": 1.0, "h": 0.0625}}
    assert run(tmp_path, "poisson", config) == 0
    report = load(tmp_path, "report.json")
    assert report["residual"] < 1e-10
    values, h = read_binary(tmp_path / "out" / "solution.bin")
    assert h == 0.0625 and np.isnan(values[0, 0])
    norms = {"field": str(tmp_path / "out" / "solution.bin"), "lower": [-1.125, -1.125],
             "function": {"kind": "flat"}, "p": [2]}
    assert run(tmp_path, "norms", norms) == 0
    rows = list(csv.reader((tmp_path / "out" / "norms.csv").open()))
    # u = (|x|^2 - 1)/4 on the unit disk: ||u||_2^2 = pi/48
    assert float(rows[1][1]) == pytest.approx(np.sqrt(np.pi / 48), rel=0.01)


def test_poisson_solver_failure(tmp_path):
    config = {"function": {"kind": "flat"}, "grid": {"center": [0, 0], "radius": 1.0, "h": 0.1}, "tol": 1e-30}
    assert run(tmp_path, "poisson", config) == 3


def test_bad_inputs(tmp_path):
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["build", "--config", str(tmp_path / "broken.json"), "--out", str(tmp_path)]) == 2
    assert cli.main(["build", "--threads", "0", "--out", str(tmp_path)]) == 2
    assert run(tmp_path, "poisson", {"function": {"kind": "torus"}}) == 2
    with pytest.raises(SystemExit):
        cli.main(["explode"])
