"""Convex base functions with singular bump perturbations and their smoothings.

The base function is the paraboloid ``|x|^2``. A perturbation adds disjoint
bumps ``eta_k * p(|x - y_k| / eps_k)`` whose profile ``p`` has a cone point at
the origin; the sum stays convex for small amplitudes and is singular exactly
at the bump centers. Smooth approximants mollify each bump with a compactly
supported radial kernel, which leaves ``|x|^2`` untouched outside the
fattened bump supports.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma

from ._smooth import radial_derivatives, smoothstep

TAPER_START = 0.5
TAPER_END = 0.6
QUAD_PER_RADIUS = 8
GUARD_FRACTION = 1e-6
_CHUNK = 2048


class InvalidSpecError(ValueError):
    """A ConvexSpec (or derived config) violates one of its invariants."""


class SingularPointError(ValueError):
    """Derivatives requested at (or too close to) a cone point."""


# --------------------------------------------------------------------------
# bump profile


def taper(s, order=2):
    """psi(s): 1 on [0, 1/2], 0 on [0.6, inf), smooth in between."""
    w = TAPER_END - TAPER_START
    vals = smoothstep((TAPER_END - np.asarray(s, dtype=float)) / w, order)
    scale = (1.0, -1.0 / w, 1.0 / w**2)
    return tuple(v * c for v, c in zip(vals, scale))


def bump_profile(s, order=0):
    """p(s) = (s + s^2 - 1) * psi(s) for radial coordinate s >= 0.

    With ``order > 0`` returns the tuple ``(p, p', ...)`` up to the second
    derivative (one-sided at s = 0).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("radial coordinate must be nonnegative")
    q = s + s * s - 1.0
    if order == 0:
        return q * taper(s, 0)[0]
    psi, dpsi, ddpsi = taper(s, 2)
    out = [q * psi, (1.0 + 2.0 * s) * psi + q * dpsi,
           2.0 * psi + 2.0 * (1.0 + 2.0 * s) * dpsi + q * ddpsi]
    return tuple(out[: order + 1])


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class BumpSpec:
    center: tuple[float, ...]
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise InvalidSpecError(f"bump radius must be positive, got {self.radius}")
        if not self.amplitude > 0:
            raise InvalidSpecError(f"bump amplitude must be positive, got {self.amplitude}")

    @property
    def support_radius(self) -> float:
        return TAPER_END * self.radius


@dataclass(frozen=True)
class ConvexSpec:
    """Perturbation data: ball ``B_r(x)``, bumps inside it, smoothing radius."""

    dimension: int
    ball_center: tuple[float, ...]
    ball_radius: float
    bumps: tuple[BumpSpec, ...] = ()
    smoothing: float = 0.0
    eta0: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ball_center", tuple(float(c) for c in self.ball_center))
        object.__setattr__(self, "bumps", tuple(self.bumps))

    def validate(self) -> "ConvexSpec":
        n = self.dimension
        if n < 2:
            raise InvalidSpecError(f"dimension must be >= 2, got {n}")
        if len(self.ball_center) != n:
            raise InvalidSpecError("ball center has the wrong dimension")
        if not self.ball_radius > 0:
            raise InvalidSpecError("perturbation ball radius must be positive")
        if self.smoothing < 0:
            raise InvalidSpecError("smoothing must be nonnegative")
        c = np.array(self.ball_center)
        centers = np.array([b.center for b in self.bumps]).reshape(-1, n)
        for k, b in enumerate(self.bumps):
            if len(b.center) != n:
                raise InvalidSpecError(f"bump {k + 1}: center has the wrong dimension")
            if np.linalg.norm(centers[k] - c) + b.radius > self.ball_radius:
                raise InvalidSpecError(
                    f"bump {k + 1}: support B_eps(y) not contained in the perturbation ball")
            for j in range(k):
                d = np.linalg.norm(centers[k] - centers[j])
                if b.radius + self.bumps[j].radius >= d:
                    raise InvalidSpecError(
                        f"bumps {j + 1} and {k + 1} overlap (eps sum {b.radius + self.bumps[j].radius:.6g}"
                        f" >= center distance {d:.6g})")
        amps = [b.amplitude for b in self.bumps]
        for k in range(1, len(amps)):
            if amps[k] > amps[0] * 0.5**k * (1 + 1e-12):
                raise InvalidSpecError(
                    f"bump {k + 1}: amplitudes must decay at least like eta_1 * 2^-(k-1)")
        if self.smoothing > 0 and self.bumps:
            limit = 0.25 * min(b.radius for b in self.bumps)
            if not self.smoothing < limit:
                raise InvalidSpecError(
                    f"smoothing {self.smoothing} must be < min(eps)/4 = {limit:.6g}")
        return self

    def with_smoothing(self, delta: float) -> "ConvexSpec":
        return replace(self, smoothing=float(delta))

    def to_dict(self) -> dict:
        return {
            "n": self.dimension,
            "ball": {"center": list(self.ball_center), "radius": self.ball_radius},
            "bumps": [{"center": list(b.center), "radius": b.radius, "amplitude": b.amplitude}
                      for b in self.bumps],
            "delta": self.smoothing,
            "eta0": self.eta0,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ConvexSpec":
        try:
            bumps = tuple(BumpSpec(tuple(b["center"]), float(b["radius"]), float(b["amplitude"]))
                          for b in d.get("bumps", []))
            return cls(
                dimension=int(d["n"]),
                ball_center=tuple(d["ball"]["center"]),
                ball_radius=float(d["ball"]["radius"]),
                bumps=bumps,
                smoothing=float(d.get("delta", 0.0)),
                eta0=float(d.get("eta0", 0.05)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSpecError(f"malformed ConvexSpec document: {exc!r}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ConvexSpec":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# center enumeration


def dyadic_offsets(n: int, max_level: int = 10):
    """Dyadic points of the open unit ball, level by level.

    Level 0 is the origin; level L adds the points of (2^-L Z)^n that are not
    on a coarser lattice, ordered by norm and then lexicographically.
    """
    yield np.zeros(n)
    for level in range(1, max_level + 1):
        m = 2**level
        ticks = range(-m + 1, m)
        pts = []
        for idx in itertools.product(ticks, repeat=n):
            if all(i % 2 == 0 for i in idx):
                continue
            if sum(i * i for i in idx) >= m * m:
                continue
            pts.append((sum(i * i for i in idx), idx))
        for _, idx in sorted(pts):
            yield np.array(idx, dtype=float) / m


def choose_centers(center: Sequence[float], radius: float, count: int, eta0: float = 0.05,
                   shrink: float = 0.98, min_radius: float | None = None,
                   max_level: int = 10) -> list[BumpSpec]:
    """First ``count`` dyadic points of the ball as bumps.

    eps_k = shrink/2 * min(distance to the sphere, distances to the other
    centers), eta_k = eta0 * 2^-k.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return []
    c = np.asarray(center, dtype=float)
    n = c.size
    if min_radius is None:
        min_radius = radius * 2.0**-max_level
    offsets = list(itertools.islice(dyadic_offsets(n, max_level), count))
    if len(offsets) < count:
        raise InvalidSpecError(f"only {len(offsets)} dyadic centers available up to level {max_level}")
    pts = c + radius * np.array(offsets)
    bumps = []
    for k, y in enumerate(pts):
        gaps = [radius - np.linalg.norm(y - c)]
        gaps += [np.linalg.norm(y - z) for j, z in enumerate(pts) if j != k]
        eps = 0.5 * shrink * min(gaps)
        if eps < min_radius:
            raise InvalidSpecError(
                f"bump {k + 1}: radius {eps:.3g} below the floor {min_radius:.3g}; reduce the count")
        bumps.append(BumpSpec(tuple(y), eps, eta0 * 2.0 ** -(k + 1)))
    return bumps


def standard_spec(n: int = 2, count: int = 8, eta0: float = 0.05, center=None,
                  radius: float = 6.0, delta: float = 0.0) -> ConvexSpec:
    """Default perturbation: ``count`` dyadic bumps in ``B_6(0)``.

    The radius is large enough that eta0 = 0.05 keeps the 8-bump sum convex
    and that the smoothing schedule down from 0.2 satisfies delta < eps/4.
    """
    center = tuple(np.zeros(n)) if center is None else tuple(center)
    bumps = choose_centers(center, radius, count, eta0)
    return ConvexSpec(n, center, radius, tuple(bumps), delta, eta0).validate()


# --------------------------------------------------------------------------
# evaluators


class GraphFunction:
    """A function on R^n with value, gradient and Hessian at point arrays."""

    dimension: int

    def derivatives(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def value(self, x) -> np.ndarray:
        return self.derivatives(x)[0]

    def __call__(self, x):
        return self.value(x)


class AnalyticFunction(GraphFunction):
    """Wraps closed-form callables ``value(X)``, ``grad(X)``, ``hess(X)`` on (N, n) arrays."""

    def __init__(self, dimension: int, value: Callable, grad: Callable, hess: Callable, name: str = ""):
        self.dimension = dimension
        self._value, self._grad, self._hess = value, grad, hess
        self.name = name

    def derivatives(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._value(x), self._grad(x), self._hess(x)

    def value(self, x):
        return self._value(np.atleast_2d(np.asarray(x, dtype=float)))

    def __repr__(self):
        return f"AnalyticFunction({self.name or '?'}, n={self.dimension})"


def quadratic(n: int, scale: float = 1.0) -> AnalyticFunction:
    """scale * |x|^2; scale=-1 gives the concave negative control."""
    return AnalyticFunction(
        n,
        lambda x: scale * np.sum(x * x, axis=1),
        lambda x: 2.0 * scale * x,
        lambda x: np.broadcast_to(2.0 * scale * np.eye(n), (len(x), n, n)).copy(),
        name=f"{scale:g}|x|^2",
    )


def flat(n: int) -> AnalyticFunction:
    return AnalyticFunction(n, lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x),
                            lambda x: np.zeros((len(x), n, n)), name="0")


def linear(a: Sequence[float]) -> AnalyticFunction:
    a = np.asarray(a, dtype=float)
    n = a.size
    return AnalyticFunction(n, lambda x: x @ a, lambda x: np.broadcast_to(a, x.shape).copy(),
                            lambda x: np.zeros((len(x), n, n)), name="linear")


def hemisphere(n: int, radius: float = 1.0) -> AnalyticFunction:
    """Upper hemisphere sqrt(R^2 - |x|^2) over the open chart ball."""

    def val(x):
        return np.sqrt(radius**2 - np.sum(x * x, axis=1))

    def grad(x):
        return -x / val(x)[:, None]

    def hess(x):
        w = val(x)
        return -(np.eye(n)[None] / w[:, None, None]
                 + x[:, :, None] * x[:, None, :] / w[:, None, None] ** 3)

    return AnalyticFunction(n, val, grad, hess, name="hemisphere")


def _kernel_constant(n: int) -> float:
    radial, _ = integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)) * t ** (n - 1), 0.0, 1.0)
    sphere = 2.0 * math.pi ** (n / 2) / gamma(n / 2)
    return 1.0 / (sphere * radial)


def kernel_second_moment(n: int, delta: float) -> float:
    """m2(delta) = int |z|^2 rho_delta(z) dz for the standard bump kernel."""
    c = _kernel_constant(n)
    radial, _ = integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)) * t ** (n + 1), 0.0, 1.0)
    return delta**2 * c * 2.0 * math.pi ** (n / 2) / gamma(n / 2) * radial


def mollifier(z, delta: float):
    """rho_delta(z) for the standard radial bump kernel; z has shape (..., n)."""
    n = z.shape[-1]
    u = np.sum(z * z, axis=-1) / delta**2
    inside = u < 1.0
    w = np.where(inside, 1.0 - u, 1.0)
    return np.where(inside, _kernel_constant(n) / delta**n * np.exp(-1.0 / w), 0.0)


class SmoothedFunction(GraphFunction):
    """|x|^2 plus the spec's bumps, mollified when ``spec.smoothing > 0``.

    The mollified bump uses the midpoint rule on a lattice of spacing delta/8
    anchored at the bump center, with kernel weights renormalized to sum to
    one. Value, gradient and Hessian are the weighted averages of the bump's
    own closed-form derivatives (the cone's Hessian is locally integrable),
    so the smoothed Hessian is a convex combination of pointwise PSD Hessians
    and convexity survives the quadrature exactly.
    """

    def __init__(self, spec: ConvexSpec, guard: float = GUARD_FRACTION):
        self.spec = spec
        self.dimension = spec.dimension
        self.guard = guard
        self._centers = np.array([b.center for b in spec.bumps]).reshape(-1, spec.dimension)

    @property
    def singular(self) -> bool:
        return self.spec.smoothing == 0.0 and bool(self.spec.bumps)

    @property
    def delta(self) -> float:
        return self.spec.smoothing

    def support_mask(self, x, fatten: float | None = None) -> np.ndarray:
        """True where x lies in some (fattened) bump support."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        fatten = self.delta if fatten is None else fatten
        out = np.zeros(len(x), dtype=bool)
        for b, y in zip(self.spec.bumps, self._centers):
            out |= np.linalg.norm(x - y, axis=1) < b.support_radius + fatten
        return out

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.delta > 0:
            return self.derivatives(x)[0]
        out = np.sum(x * x, axis=1)
        for b, y in zip(self.spec.bumps, self._centers):
            r = np.linalg.norm(x - y, axis=1)
            near = r < b.support_radius
            out[near] += b.amplitude * bump_profile(r[near] / b.radius)
        return out

    def derivatives(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = self.dimension
        val = np.sum(x * x, axis=1)
        grad = 2.0 * x
        hess = np.broadcast_to(2.0 * np.eye(n), (len(x), n, n)).copy()
        for b, y in zip(self.spec.bumps, self._centers):
            r = np.linalg.norm(x - y, axis=1)
            near = np.flatnonzero(r < b.support_radius + self.delta)
            if near.size == 0:
                continue
            if self.delta > 0:
                v, g, h = _mollified_bump(x[near], y, b, self.delta)
            else:
                v, g, h = _singular_bump(x[near], y, b, self.guard)
            val[near] += v
            grad[near] += g
            hess[near] += h
        return val, grad, hess


def _singular_bump(x, y, bump: BumpSpec, guard: float):
    z = x - y
    r = np.linalg.norm(z, axis=1)
    if np.any(r < guard * bump.radius):
        i = int(np.argmin(r))
        raise SingularPointError(
            f"point {x[i].tolist()} within the guard radius of the cone point {y.tolist()}")
    p, dp, ddp = bump_profile(r / bump.radius, order=2)
    eta, eps = bump.amplitude, bump.radius
    g, h = radial_derivatives(z, r, eta / eps * dp, eta / eps**2 * ddp)
    return eta * p, g, h


def _mollified_bump(x, y, bump: BumpSpec, delta: float):
    n = x.shape[1]
    hq = delta / QUAD_PER_RADIUS
    m = 2 * QUAD_PER_RADIUS + 2
    offsets = np.array(list(itertools.product(range(m), repeat=n)), dtype=float)
    val = np.empty(len(x))
    grad = np.empty((len(x), n))
    hess = np.empty((len(x), n, n))
    eta, eps = bump.amplitude, bump.radius
    for lo in range(0, len(x), _CHUNK):
        xs = x[lo:lo + _CHUNK]
        base = np.floor((xs - y) / hq - 0.5 - QUAD_PER_RADIUS)
        z = hq * (base[:, None, :] + offsets[None] + 0.5)
        w = mollifier(xs[:, None, :] - (y + z), delta)
        w /= w.sum(axis=1, keepdims=True)
        r = np.linalg.norm(z, axis=-1)
        live = (w > 0) & (r < bump.support_radius)
        p, dp, ddp = bump_profile(r[live] / eps, order=2)
        g, h = radial_derivatives(z[live], r[live], eta / eps * dp, eta / eps**2 * ddp)
        pv = np.zeros(w.shape)
        gv = np.zeros(w.shape + (n,))
        hv = np.zeros(w.shape + (n, n))
        pv[live], gv[live], hv[live] = eta * p, g, h
        val[lo:lo + _CHUNK] = np.einsum("nq,nq->n", w, pv)
        grad[lo:lo + _CHUNK] = np.einsum("nq,nqi->ni", w, gv)
        hess[lo:lo + _CHUNK] = np.einsum("nq,nqij->nij", w, hv)
    return val, grad, hess


# --------------------------------------------------------------------------
# constructors and certificates


def assemble_singular(spec: ConvexSpec, guard: float = GUARD_FRACTION) -> SmoothedFunction:
    spec.validate()
    if spec.smoothing != 0.0:
        raise InvalidSpecError("assemble_singular needs smoothing == 0")
    return SmoothedFunction(spec, guard)


def smooth_approximant(spec: ConvexSpec, delta: float | None = None) -> SmoothedFunction:
    if delta is not None:
        spec = spec.with_smoothing(delta)
    if not spec.smoothing > 0:
        raise InvalidSpecError("smooth_approximant needs delta > 0")
    return SmoothedFunction(spec.validate())


def verify_convexity(f: GraphFunction, points) -> float:
    """Smallest Hessian eigenvalue over the sample points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.inf
    for start in range(0, len(pts), 8 * _CHUNK):
        _, _, h = f.derivatives(pts[start:start + 8 * _CHUNK])
        lo = min(lo, float(np.linalg.eigvalsh(h)[:, 0].min()))
    return lo


def certificate_points(spec: ConvexSpec, per_axis: int = 121, margin: float = 0.1):
    """Tensor grid over the perturbation ball (plus margin), minus guard balls."""
    n = spec.dimension
    c = np.array(spec.ball_center)
    half = spec.ball_radius * (1.0 + margin)
    axes = [np.linspace(ci - half, ci + half, per_axis) for ci in c]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    keep = np.ones(len(pts), dtype=bool)
    for b in spec.bumps:
        keep &= np.linalg.norm(pts - np.array(b.center), axis=1) > 10 * GUARD_FRACTION * b.radius
    return pts[keep]


def gate_amplitudes(spec: ConvexSpec, points=None, factor: float = 0.5,
                    max_tries: int = 30) -> ConvexSpec:
    """Scale eta0 (and all amplitudes) by ``factor`` until the spec certifies convex."""
    points = certificate_points(spec) if points is None else points
    current = spec
    for _ in range(max_tries):
        if verify_convexity(SmoothedFunction(current), points) > 0:
            return current
        current = replace(
            current, eta0=current.eta0 * factor,
            bumps=tuple(replace(b, amplitude=b.amplitude * factor) for b in current.bumps))
    raise InvalidSpecError("convexity gate failed: amplitudes did not certify after shrinking")
