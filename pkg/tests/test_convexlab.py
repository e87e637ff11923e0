import json
from dataclasses import replace

import numpy as np
import pytest

from czlab import convexlab as cl


def covering_radius(bumps, center, radius, probe=81):
    ax = np.linspace(-radius, radius, probe)
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2) + center
    pts = pts[np.linalg.norm(pts - center, axis=1) <= radius]
    ys = np.array([b.center for b in bumps])
    return np.max(np.min(np.linalg.norm(pts[:, None] - ys[None], axis=2), axis=1))


def test_choose_centers_empty():
    assert cl.choose_centers((0.0, 0.0), 1.0, 0) == []


def test_single_bump_fits_inside_ball():
    (b,) = cl.choose_centers((0.0, 0.0), 1.0, 1)
    assert b.center == (0.0, 0.0)
    assert b.radius < 1.0


def test_more_centers_cover_better():
    c = np.zeros(2)
    coarse = covering_radius(cl.choose_centers(c, 1.0, 4), c, 0.5)
    fine = covering_radius(cl.choose_centers(c, 1.0, 16), c, 0.5)
    assert fine < coarse


def test_centers_disjoint_and_amplitudes_halve():
    bumps = cl.choose_centers((0.0, 0.0), 6.0, 8, eta0=0.05)
    for k, b in enumerate(bumps):
        assert b.amplitude == pytest.approx(0.05 * 2.0 ** -(k + 1))
        assert np.linalg.norm(b.center) + b.radius <= 6.0
        for a in bumps[:k]:
            assert a.radius + b.radius < np.linalg.norm(np.subtract(a.center, b.center))


def test_bump_profile_shape():
    s = np.linspace(0.0, 0.7, 2001)
    p = cl.bump_profile(s)
    assert p[0] == pytest.approx(-1.0)
    assert cl.bump_profile(np.array([0.0]), 1)[1][0] == pytest.approx(1.0)
    assert np.all(p[s >= 0.6] == 0.0)
    _, d1, d2 = cl.bump_profile(s, 2)
    assert np.max(np.abs(np.gradient(p, s)[5:-5] - d1[5:-5])) < 1e-3
    assert np.max(np.abs(np.gradient(d1, s)[5:-5] - d2[5:-5])) < 1e-1


def test_taper_is_c2():
    s = np.array([0.5, 0.6])
    for order in (0, 1, 2):
        left = cl.taper(s - 1e-9, order)
        right = cl.taper(s + 1e-9, order)
        assert np.allclose(left, right, atol=1e-6)


def test_zero_bumps_is_paraboloid():
    spec = cl.standard_spec(count=0)
    f = cl.SmoothedFunction(spec)
    x = np.random.default_rng(1).uniform(-3, 3, (50, 2))
    v, g, h = f.derivatives(x)
    assert np.allclose(v, np.sum(x * x, axis=1))
    assert np.allclose(g, 2 * x)
    assert np.allclose(h, 2 * np.eye(2))


def test_zero_bumps_smoothed_unchanged():
    spec = cl.ConvexSpec(2, (0.0, 0.0), 6.0, (), 0.1)
    f = cl.SmoothedFunction(spec.validate())
    x = np.random.default_rng(2).uniform(-3, 3, (20, 2))
    assert np.array_equal(f(x), np.sum(x * x, axis=1))


def test_mollified_matches_singular_away_from_centers():
    spec = cl.standard_spec()
    sing = cl.SmoothedFunction(spec)
    smooth = cl.smooth_approximant(spec, 0.025)
    b = spec.bumps[0]
    # inside the affine-free region the mollified profile differs by O(delta^2)
    x = np.array(b.center) + np.array([[0.3 * b.radius, 0.0], [0.0, -0.2 * b.radius]])
    assert np.allclose(sing(x), smooth(x), atol=5 * b.amplitude * (0.025 / b.radius) ** 2)


def test_min_eigenvalue_oracles():
    pts = np.random.default_rng(3).uniform(-1, 1, (100, 2))
    assert cl.verify_convexity(cl.quadratic(2), pts) == pytest.approx(2.0)
    assert cl.verify_convexity(cl.quadratic(2, -1.0), pts) == pytest.approx(-2.0)


def test_smoothed_standard_spec_is_convex():
    spec = cl.standard_spec(delta=0.05)
    f = cl.SmoothedFunction(spec)
    assert cl.verify_convexity(f, cl.certificate_points(spec, per_axis=81)) > 0


def test_smoothing_limit_enforced():
    spec = cl.standard_spec()
    eps = min(b.radius for b in spec.bumps)
    with pytest.raises(cl.InvalidSpecError):
        spec.with_smoothing(eps / 4).validate()


def test_overlap_and_containment_rejected():
    b1 = cl.BumpSpec((0.0, 0.0), 0.5, 0.01)
    b2 = cl.BumpSpec((0.6, 0.0), 0.5, 0.005)
    with pytest.raises(cl.InvalidSpecError, match="overlap"):
        cl.ConvexSpec(2, (0.0, 0.0), 3.0, (b1, b2)).validate()
    with pytest.raises(cl.InvalidSpecError, match="not contained"):
        cl.ConvexSpec(2, (0.0, 0.0), 0.8, (replace(b1, center=(0.5, 0.0)),)).validate()


def test_amplitude_decay_rule():
    b1 = cl.BumpSpec((0.0, 0.0), 0.4, 0.01)
    b2 = cl.BumpSpec((1.0, 0.0), 0.4, 0.009)
    with pytest.raises(cl.InvalidSpecError, match="decay"):
        cl.ConvexSpec(2, (0.0, 0.0), 3.0, (b1, b2)).validate()


def test_bump_fields_validated():
    with pytest.raises(cl.InvalidSpecError):
        cl.BumpSpec((0.0, 0.0), -1.0, 0.1)
    with pytest.raises(cl.InvalidSpecError):
        cl.BumpSpec((0.0, 0.0), 1.0, 0.0)


def test_spec_json_roundtrip():
    spec = cl.standard_spec(delta=0.1)
    again = cl.ConvexSpec.from_json(spec.to_json())
    assert again == spec
    assert json.loads(again.to_json()) == json.loads(spec.to_json())


def test_malformed_document():
    with pytest.raises(cl.InvalidSpecError):
        cl.ConvexSpec.from_dict({"n": 2})


def test_gate_amplitudes_shrinks_until_convex():
    loud = cl.standard_spec(eta0=5.0)
    pts = cl.certificate_points(loud, per_axis=61)
    assert cl.verify_convexity(cl.SmoothedFunction(loud), pts) < 0
    quiet = cl.gate_amplitudes(loud, pts)
    assert quiet.eta0 < loud.eta0
    assert cl.verify_convexity(cl.SmoothedFunction(quiet), pts) > 0


def test_kernel_normalized():
    h = 0.01
    ax = np.arange(-1, 1 + h / 2, h)
    z = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1)
    rho = cl.mollifier(z, 1.0)
    assert rho.sum() * h * h == pytest.approx(1.0, rel=1e-4)
    m2 = np.sum(rho * np.sum(z * z, -1)) * h * h
    assert cl.kernel_second_moment(2, 1.0) == pytest.approx(m2, rel=1e-3)
