import math

import numpy as np
import pytest

from czlab import meshdisc as md
from czlab.convexlab import flat, linear, quadratic


@pytest.fixture
def unit_box():
    return md.ChartGrid.box([0.0, 0.0], [1.0, 1.0], 1 / 32)


def test_ball_grid_centred(tmp_path):
    g = md.ChartGrid.ball([0.5, -0.25], 1.0, 0.125)
    assert g.mask[g.nearest_node([0.5, -0.25])]
    assert not g.mask[0, 0]
    assert g.shape == (21, 21)


def test_box_rejects_incommensurate_spacing():
    with pytest.raises(ValueError):
        md.ChartGrid.box([0, 0], [1, 1], 0.3)


def test_binary_roundtrip(tmp_path):
    g = md.ChartGrid.ball([0.0, 0.0], 1.0, 0.1)
    f = md.ScalarField.sample(g, lambda x: np.sin(x[:, 0]) + x[:, 1] ** 2)
    f.to_binary(tmp_path / "u.bin")
    vals, h = md.read_binary(tmp_path / "u.bin")
    assert h == 0.1
    assert np.array_equal(vals[g.mask], f.masked())
    assert np.all(np.isnan(vals[~g.mask]))


def test_csv_export(tmp_path):
    g = md.ChartGrid.ball([0.0, 0.0], 1.0, 0.5)
    md.ScalarField.sample(g, lambda x: x[:, 0]).to_csv(tmp_path / "u.csv")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,value"
    assert len(lines) == 1 + g.mask.sum()


def test_read_binary_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        md.read_binary(tmp_path / "x.bin")


def test_nonfinite_field_rejected():
    g = md.ChartGrid.ball([0.0, 0.0], 1.0, 0.5)
    with pytest.raises(ValueError):
        md.ScalarField(g, np.full(g.shape, np.nan))


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0, 7.0])
def test_lp_of_one_on_flat_box(unit_box, p):
    one = md.ScalarField(unit_box, np.ones(unit_box.shape))
    assert md.lp_norm(one, flat(2), p) == pytest.approx(1.0, abs=1e-12)


def test_lp_of_half_indicator():
    g = md.ChartGrid.box([0.0, 0.0], [1.0, 1.0], 1 / 32)
    x = g.coordinates()[..., 0]
    for p in (2.0, 4.0):
        # trapezoid rule: |v|^p takes half the jump on the midline
        vals = np.where(x < 0.5, 1.0, 0.0) + np.where(np.isclose(x, 0.5), 0.5 ** (1 / p), 0.0)
        field = md.ScalarField(g, vals)
        assert md.lp_norm(field, flat(2), p) == pytest.approx(0.5 ** (1 / p), abs=1e-12)


def test_lp_on_tilted_plane(unit_box):
    a = 1.7
    one = md.ScalarField(unit_box, np.ones(unit_box.shape))
    for p in (2.0, 3.0):
        assert md.lp_norm(one, linear([a, 0.0]), p) == pytest.approx((1 + a * a) ** (1 / (2 * p)), rel=1e-12)


def test_lp_monotone_in_p_toward_max(unit_box):
    x = unit_box.coordinates()[..., 0]
    field = md.ScalarField(unit_box, np.where(x < 0.25, 3.0, 1.0))
    norms = [md.lp_norm(field, flat(2), p) for p in (2, 4, 8, 16)]
    assert all(b > a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 3.0


def test_lp_rejects_small_exponent_and_empty_mask(unit_box):
    one = md.ScalarField(unit_box, np.ones(unit_box.shape))
    with pytest.raises(ValueError):
        md.lp_norm(one, None, 1.0)
    empty = md.ScalarField(unit_box.with_mask(np.zeros(unit_box.shape, bool)), np.zeros(unit_box.shape))
    with pytest.raises(md.EmptyMaskError):
        md.lp_norm(empty, None, 2.0)


def test_tensor_norm_examples():
    eye = np.eye(2)[None]
    assert md.tensor_norm(eye, eye)[0] == pytest.approx(math.sqrt(2))
    assert md.tensor_norm(np.zeros((1, 2, 2)), eye)[0] == 0.0
    g_inv = np.diag([0.2, 1.0])[None]
    assert md.tensor_norm(np.diag([1.0, 0.0])[None], g_inv)[0] == pytest.approx(0.2)


def test_cutoff_profile():
    spec = md.CutoffSpec.concentric((0.0, 0.0), 0.5, 1.0)
    chi = md.build_cutoff(spec)
    v, g, _ = chi.derivatives(np.array([[0.0, 0.0], [0.49, 0.0], [1.01, 0.0], [2.0, 1.0], [0.75, 0.0]]))
    assert np.allclose(v[:2], 1.0)
    assert np.allclose(v[2:4], 0.0) and np.allclose(g[2:4], 0.0)
    assert 0 < v[4] < 1
    r = np.linspace(0.5, 1.0, 501)
    _, g, _ = chi.derivatives(np.stack([r, 0 * r], -1))
    assert np.max(np.linalg.norm(g, axis=1)) <= chi.slope_bound * (1 + 1e-9)


def test_cutoff_derivatives_by_differences():
    chi = md.build_cutoff(md.CutoffSpec((0.1, 0.0), 0.3, (0.0, 0.0), 0.9))
    x = np.array([[0.55, 0.2]])
    e = 1e-6
    _, g, hess = chi.derivatives(x)
    for i in range(2):
        d = np.eye(2)[i] * e
        fd = (chi.derivatives(x + d)[0] - chi.derivatives(x - d)[0]) / (2 * e)
        assert fd[0] == pytest.approx(g[0, i], abs=1e-7)
        fdg = (chi.derivatives(x + d)[1] - chi.derivatives(x - d)[1]) / (2 * e)
        assert np.allclose(fdg[0], hess[0, i], atol=1e-5)


def test_cutoff_needs_nested_balls():
    with pytest.raises(ValueError):
        md.CutoffSpec((0.6, 0.0), 0.5, (0.0, 0.0), 1.0)


def test_geodesic_flat_axis_step():
    g = md.ChartGrid.box([0.0, 0.0], [1.0, 1.0], 0.05)
    graph = md.GeodesicGraph(flat(2), g)
    assert graph.distance((3, 3), (4, 3)) == pytest.approx(0.05)


def test_geodesic_on_tilted_plane():
    g = md.ChartGrid.box([-0.1, -0.1], [1.1, 0.1], 0.05)
    d = md.geodesic_distance(linear([1.0, 0.0]), g, g.nearest_node([0, 0]), g.nearest_node([1, 0]))
    assert d == pytest.approx(math.sqrt(2), rel=0.02)


def test_geodesic_on_paraboloid():
    g = md.ChartGrid.box([-0.1, -0.1], [1.1, 0.1], 0.025)
    d = md.geodesic_distance(quadratic(2), g, g.nearest_node([0, 0]), g.nearest_node([1, 0]))
    exact = 0.5 * math.sqrt(5) + 0.25 * math.asinh(2)
    assert d == pytest.approx(exact, rel=0.03)


def test_disconnected_mask():
    g = md.ChartGrid.box([0.0, 0.0], [1.0, 1.0], 0.25)
    mask = np.ones(g.shape, bool)
    mask[2, :] = False
    graph = md.GeodesicGraph(flat(2), g.with_mask(mask))
    with pytest.raises(md.DisconnectedMaskError):
        graph.distance((0, 0), (4, 4))


def test_holder_quotient_examples():
    g = md.ChartGrid.ball([0.0, 0.0], 1.0, 0.05)
    graph = md.GeodesicGraph(flat(2), g)
    const = md.ScalarField(g, np.where(g.mask, 2.0, 0.0))
    assert md.holder_quotient(const, flat(2), 0.5, graph=graph) == 0.0
    a = 1 - 2 / 4
    x0 = g.nearest_node([0, 0])
    d = md.ScalarField.sample(g, lambda x: np.linalg.norm(x, axis=1) ** a)
    q = md.holder_quotient(d, flat(2), a, anchors=[x0], graph=graph)
    assert q == pytest.approx(1.0, rel=0.05)
    q2 = md.holder_quotient(2 * d, flat(2), a, anchors=[x0], graph=graph)
    assert q2 == pytest.approx(2 * q)
    with pytest.raises(ValueError):
        md.holder_quotient(d, flat(2), 0.0, graph=graph)
