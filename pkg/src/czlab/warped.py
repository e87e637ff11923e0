"""Warping functions of model metrics dt^2 + sigma(t)^2 g_sphere and annulus splicing.

Curvatures: Sect_rad = -sigma''/sigma, Sect_tg = (1 - sigma'^2)/sigma^2.
The splice translates the blocks [e_{j-1}, d_j] of a given warping function
far apart and joins consecutive blocks by concave bridges made of the two
adjacent linear laws plus a quartic fillet at their intersection.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BPoly

JUNCTION_TOL = 1e-9


class CornerError(ValueError):
    """Second derivative requested at a junction where the law is not C^2."""


class SpliceInfeasibleError(RuntimeError):
    pass


class InvalidAnnuliError(ValueError):
    pass


# --------------------------------------------------------------------------
# pieces


class Piece:
    kind = ""

    def __init__(self, t0: float, t1: float):
        if not t1 > t0:
            raise ValueError(f"empty piece [{t0}, {t1}]")
        self.t0 = float(t0)
        self.t1 = float(t1)

    def eval(self, t):
        raise NotImplementedError

    def bounds(self) -> dict:
        return {"t0": self.t0, "t1": None if math.isinf(self.t1) else self.t1}


class AffinePiece(Piece):
    kind = "affine"

    def __init__(self, t0, t1, slope, intercept):
        super().__init__(t0, t1)
        self.slope = float(slope)
        self.intercept = float(intercept)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return self.slope * t + self.intercept, np.full_like(t, self.slope), np.zeros_like(t)

    def to_dict(self):
        return {"type": self.kind, **self.bounds(), "slope": self.slope, "intercept": self.intercept}


class PolyPiece(Piece):
    """sum c_i (t - center)^i."""

    kind = "poly"

    def __init__(self, t0, t1, center, coeffs):
        super().__init__(t0, t1)
        self.center = float(center)
        self.coeffs = [float(c) for c in coeffs]
        self._p = np.polynomial.Polynomial(self.coeffs)

    def eval(self, t):
        x = np.asarray(t, dtype=float) - self.center
        d1 = self._p.deriv()
        return self._p(x), d1(x), d1.deriv()(x)

    def to_dict(self):
        return {"type": self.kind, **self.bounds(), "center": self.center, "coeffs": self.coeffs}


_BASIS = ("one", "t", "sin", "cos", "cosh", "sinh")


class AnalyticPiece(Piece):
    """Linear combination of 1, t, sin t, cos t, cosh t, sinh t."""

    kind = "analytic"

    def __init__(self, t0, t1, coeffs: dict):
        super().__init__(t0, t1)
        unknown = set(coeffs) - set(_BASIS)
        if unknown:
            raise ValueError(f"unknown basis functions {sorted(unknown)}")
        self.coeffs = {k: float(coeffs.get(k, 0.0)) for k in _BASIS}

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        c = self.coeffs
        s, co, ch, sh = np.sin(t), np.cos(t), np.cosh(t), np.sinh(t)
        v = c["one"] + c["t"] * t + c["sin"] * s + c["cos"] * co + c["cosh"] * ch + c["sinh"] * sh
        d1 = c["t"] + c["sin"] * co - c["cos"] * s + c["cosh"] * sh + c["sinh"] * ch
        d2 = -c["sin"] * s - c["cos"] * co + c["cosh"] * ch + c["sinh"] * sh
        return v, d1, d2

    def to_dict(self):
        return {"type": self.kind, **self.bounds(), "coeffs": {k: v for k, v in self.coeffs.items() if v}}


class SampledPiece(Piece):
    """Quintic Hermite interpolant through samples of sigma, sigma', sigma''."""

    kind = "sampled"

    def __init__(self, t, d0, d1, d2):
        t = np.asarray(t, dtype=float)
        super().__init__(t[0], t[-1])
        self.t = t
        self.data = np.stack([d0, d1, d2], axis=1).astype(float)
        self._poly = BPoly.from_derivatives(t, self.data)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return self._poly(t), self._poly(t, 1), self._poly(t, 2)

    def to_dict(self):
        return {"type": self.kind, "t": self.t.tolist(), "d0": self.data[:, 0].tolist(),
                "d1": self.data[:, 1].tolist(), "d2": self.data[:, 2].tolist()}


class ShiftPiece(Piece):
    """base(t + offset) restricted to [t0, t1]."""

    kind = "shift"

    def __init__(self, t0, t1, offset, base: "WarpingFunction"):
        super().__init__(t0, t1)
        self.offset = float(offset)
        self.base = base

    def eval(self, t):
        return self.base.evaluate(np.asarray(t, dtype=float) + self.offset, strict=False)

    def to_dict(self):
        return {"type": self.kind, **self.bounds(), "offset": self.offset, "base": self.base.to_dict()}


def _piece_from_dict(d: dict) -> Piece:
    kind = d["type"]
    t1 = math.inf if d.get("t1") is None else d["t1"]
    if kind == "affine":
        return AffinePiece(d["t0"], t1, d["slope"], d["intercept"])
    if kind == "poly":
        return PolyPiece(d["t0"], t1, d["center"], d["coeffs"])
    if kind == "analytic":
        return AnalyticPiece(d["t0"], t1, d["coeffs"])
    if kind == "sampled":
        return SampledPiece(d["t"], d["d0"], d["d1"], d["d2"])
    if kind == "shift":
        return ShiftPiece(d["t0"], t1, d["offset"], WarpingFunction.from_dict(d["base"]))
    raise ValueError(f"unknown piece type {kind!r}")


# --------------------------------------------------------------------------
# warping functions


class WarpingFunction:
    """Consecutive pieces covering [t_start, t_end)."""

    def __init__(self, pieces, smoothness: int = 2):
        self.pieces = list(pieces)
        if not self.pieces:
            raise ValueError("a warping function needs at least one piece")
        self.smoothness = smoothness
        for a, b in zip(self.pieces, self.pieces[1:]):
            if abs(a.t1 - b.t0) > JUNCTION_TOL * max(1.0, abs(b.t0)):
                raise ValueError(f"pieces leave a gap or overlap at t={a.t1}")
        self.knots = np.array([p.t0 for p in self.pieces[1:]])
        self._check_junctions()

    @property
    def start(self) -> float:
        return self.pieces[0].t0

    @property
    def end(self) -> float:
        return self.pieces[-1].t1

    def _check_junctions(self):
        for k, t in enumerate(self.knots):
            left = self.pieces[k].eval(np.array([t]))
            right = self.pieces[k + 1].eval(np.array([t]))
            for order in range(min(self.smoothness, 1) + 1):
                jump = abs(float(left[order][0] - right[order][0]))
                if jump > 1e-8 * max(1.0, abs(float(left[order][0]))):
                    raise ValueError(f"derivative of order {order} jumps by {jump:.3g} at t={t}")

    def _locate(self, t, side="right"):
        return np.searchsorted(self.knots, t, side=side)

    def evaluate(self, t, side: str = "right", strict: bool = True):
        """(sigma, sigma', sigma'') at t; at junctions the piece on ``side`` is used.

        ``strict`` refuses t outside the covered range.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if strict and (np.any(t < self.start - 1e-12) or np.any(t > self.end + 1e-12)):
            raise ValueError("t outside the domain of the warping function")
        idx = self._locate(t, side)
        out = [np.empty_like(t) for _ in range(3)]
        for k in np.unique(idx):
            sel = idx == k
            vals = self.pieces[k].eval(t[sel])
            for o in range(3):
                out[o][sel] = vals[o]
        return tuple(out)

    def __call__(self, t):
        return self.evaluate(t)[0]

    def corner_jump(self, t) -> float:
        """|sigma''(t+) - sigma''(t-)| (0 away from junctions)."""
        left = self.evaluate(t, side="left")[2]
        right = self.evaluate(t, side="right")[2]
        return float(np.max(np.abs(left - right)))

    def to_dict(self) -> dict:
        return {"smoothness": self.smoothness, "pieces": [p.to_dict() for p in self.pieces]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "WarpingFunction":
        return cls([_piece_from_dict(p) for p in d["pieces"]], d.get("smoothness", 2))

    @classmethod
    def from_json(cls, text: str) -> "WarpingFunction":
        return cls.from_dict(json.loads(text))


def analytic(coeffs: dict, t0: float = 0.0, t1: float = math.inf) -> WarpingFunction:
    return WarpingFunction([AnalyticPiece(t0, t1, coeffs)])


def affine(slope: float, intercept: float, t0: float = 0.0, t1: float = math.inf) -> WarpingFunction:
    return WarpingFunction([AffinePiece(t0, t1, slope, intercept)])


# --------------------------------------------------------------------------
# curvature


def curvature_profile(sigma: WarpingFunction, t, side: str | None = None):
    """(Sect_rad, Sect_tg) = (-sigma''/sigma, (1 - sigma'^2)/sigma^2).

    Without ``side``, evaluation at a junction with a jump in sigma'' raises.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if side is None:
        on_knot = np.isin(t, sigma.knots)
        if np.any(on_knot) and sigma.corner_jump(t[on_knot]) > 1e-8:
            raise CornerError("second derivative undefined at a corner of the warping function")
        side = "right"
    s, d1, d2 = sigma.evaluate(t, side=side)
    if np.any(s <= 0):
        raise ValueError("warping function must be positive where curvature is evaluated")
    return -d2 / s, (1.0 - d1 * d1) / (s * s)


def kappa_estimate(sigma: WarpingFunction, interval, samples: int = 4001) -> float:
    """max(0, -min over samples of min(Sect_rad, Sect_tg)), both sides at junctions."""
    lo, hi = interval
    ts = np.linspace(lo, hi, samples)
    knots = sigma.knots[(sigma.knots >= lo) & (sigma.knots <= hi)]
    worst = math.inf
    for side in ("left", "right"):
        pts = np.concatenate([ts, knots])
        rad, tg = curvature_profile(sigma, pts, side=side)
        worst = min(worst, float(np.min(np.minimum(rad, tg))))
    return max(0.0, -worst)


# --------------------------------------------------------------------------
# bound functions


@dataclass(frozen=True)
class BoundFunction:
    """lambda(t): "log1p" = scale log(1 + t), "constant" = scale, "linear" = scale t."""

    kind: str = "log1p"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("log1p", "constant", "linear"):
            raise ValueError(f"unknown bound kind {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "log1p":
            return self.scale * np.log1p(t)
        if self.kind == "linear":
            return self.scale * t
        return np.full_like(t, self.scale)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


# --------------------------------------------------------------------------
# fillets


def quartic_fillet(S: float, value: float, alpha: float, gamma: float, eps: float) -> PolyPiece:
    """Concave C^2 join of value + alpha (t - S) and value + gamma (t - S) on [S - eps, S + eps].

    sigma'' = A (1 - u^2), u = (t - S)/eps, vanishes at both edges; A = 3(gamma - alpha)/(4 eps).
    """
    if not eps > 0:
        raise ValueError("fillet half-width must be positive")
    A = 3.0 * (gamma - alpha) / (4.0 * eps)
    # integrate twice in x = t - S from x = -eps
    a0 = value - alpha * eps
    # sigma'(x) = alpha + A (x + eps) - A (x^3 + eps^3) / (3 eps^2)
    # sigma(x)  = a0 + alpha (x + eps) + A (x + eps)^2 / 2 - A ((x^4 - eps^4)/4 + eps^3 (x + eps)) / (3 eps^2)
    p = np.polynomial.Polynomial
    xe = p([eps, 1.0])
    poly = (a0 + alpha * xe + 0.5 * A * xe**2
            - A / (3.0 * eps**2) * ((p([0, 0, 0, 0, 1.0]) - eps**4) / 4.0 + eps**3 * xe))
    return PolyPiece(S - eps, S + eps, S, poly.coef)


def filleted_polyline(knots, widths, tail: float | None = None) -> WarpingFunction:
    """Polyline through (t_i, s_i) with every interior corner replaced by a quartic fillet.

    ``widths[i]`` is the half-width at interior knot i + 1. Convex corners
    give sigma'' > 0, concave ones sigma'' < 0.
    """
    knots = np.asarray(knots, dtype=float)
    widths = list(widths)
    if len(widths) != len(knots) - 2:
        raise ValueError("one fillet width per interior knot")
    slopes = np.diff(knots[:, 1]) / np.diff(knots[:, 0])
    pieces = []
    cursor = knots[0, 0]
    for i in range(1, len(knots) - 1):
        t, s = knots[i]
        w = widths[i - 1]
        if t - w < cursor - 1e-12 or t + w > knots[i + 1, 0]:
            raise ValueError(f"fillet at knot {i} does not fit between its neighbours")
        if t - w > cursor:
            pieces.append(AffinePiece(cursor, t - w, slopes[i - 1], s - slopes[i - 1] * t))
        pieces.append(quartic_fillet(t, s, slopes[i - 1], slopes[i], w))
        cursor = t + w
    t_end, s_end = knots[-1]
    end = t_end if tail is None else tail
    pieces.append(AffinePiece(cursor, end, slopes[-1], s_end - slopes[-1] * t_end))
    return WarpingFunction(pieces)


# --------------------------------------------------------------------------
# annuli and splicing


@dataclass(frozen=True, eq=False)
class AnnuliData:
    """A warping function with annuli [a_k, b_k] and linear stretches.

    sigma is affine increasing on [c_k, d_k] and affine decreasing on
    [e_k, f_k]; kappa[k] bounds -Sect from above on [e_{k-1}, d_k] (with
    e_0 = ``start``).
    """

    sigma: WarpingFunction
    a: tuple
    b: tuple
    c: tuple
    d: tuple
    e: tuple
    f: tuple
    kappa: tuple
    start: float | None = None

    def __post_init__(self):
        for name in "abcdef":
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        object.__setattr__(self, "kappa", tuple(float(x) for x in self.kappa))
        if self.start is None:
            object.__setattr__(self, "start", self.a[0] if self.a else self.sigma.start)

    @property
    def count(self) -> int:
        return len(self.a)

    def e_prev(self, j: int) -> float:
        """e_{j-1} for 1-based j."""
        return self.start if j == 1 else self.e[j - 2]

    def laws(self, j: int):
        """(alpha, beta, gamma, delta) of annulus j (1-based)."""
        s0, d1, _ = self.sigma.evaluate([self.c[j - 1]], side="right")
        s1, g1, _ = self.sigma.evaluate([self.f[j - 1]], side="left")
        alpha = float(d1[0])
        gamma = float(g1[0])
        return alpha, float(s0[0]) - alpha * self.c[j - 1], gamma, float(s1[0]) - gamma * self.f[j - 1]

    def validate(self) -> "AnnuliData":
        N = self.count
        if N == 0:
            raise InvalidAnnuliError("need at least one annulus")
        if any(len(getattr(self, n)) != N for n in "abcdef") or len(self.kappa) != N:
            raise InvalidAnnuliError("all interval lists and kappa need one entry per annulus")
        seq = [self.start]
        for k in range(N):
            seq += [self.a[k], self.b[k], self.c[k], self.d[k], self.e[k], self.f[k]]
        if any(y <= x for x, y in zip(seq[1:], seq[2:])) or seq[0] > seq[1]:
            raise InvalidAnnuliError("intervals must satisfy a_k < b_k < c_k < d_k < e_k < f_k < a_{k+1}")
        if any(y < x for x, y in zip(self.kappa, self.kappa[1:])):
            raise InvalidAnnuliError("kappa must be nondecreasing")
        if any(k < 0 for k in self.kappa):
            raise InvalidAnnuliError("kappa must be nonnegative")
        for j in range(1, N + 1):
            for lo, hi in ((self.c[j - 1], self.d[j - 1]), (self.e[j - 1], self.f[j - 1])):
                ts = np.linspace(lo, hi, 9)
                _, _, s2 = self.sigma.evaluate(ts)
                if np.max(np.abs(s2)) > 1e-9:
                    raise InvalidAnnuliError(f"sigma is not affine on [{lo}, {hi}]")
            alpha, _, gamma, _ = self.laws(j)
            if not alpha > 0 or not gamma < 0:
                raise InvalidAnnuliError(f"annulus {j}: need alpha > 0 and gamma < 0")
        if self.f[-1] > self.sigma.end:
            raise InvalidAnnuliError("warping function does not cover the last annulus")
        return self

    def to_dict(self) -> dict:
        return {"sigma": self.sigma.to_dict(), "a": list(self.a), "b": list(self.b), "c": list(self.c),
                "d": list(self.d), "e": list(self.e), "f": list(self.f), "kappa": list(self.kappa),
                "start": self.start}

    @classmethod
    def from_dict(cls, d: dict) -> "AnnuliData":
        return cls(WarpingFunction.from_dict(d["sigma"]), d["a"], d["b"], d["c"], d["d"], d["e"], d["f"],
                   d["kappa"], d.get("start"))


@dataclass(frozen=True, eq=False)
class SplicedWarping:
    anchors: tuple  # T_j
    junctions: tuple  # S_j
    fillet_widths: tuple  # eps_j
    sigma: WarpingFunction
    bound: BoundFunction
    annuli: AnnuliData
    blocks: tuple = field(default=())  # (T_j, T_j + d_j - e_{j-1})
    bridges: tuple = field(default=())  # (block end, T_{j+1})

    def to_dict(self) -> dict:
        return {"anchors": list(self.anchors), "junctions": list(self.junctions),
                "fillet_widths": list(self.fillet_widths), "blocks": [list(b) for b in self.blocks],
                "bridges": [list(b) for b in self.bridges], "bound": self.bound.to_dict(),
                "sigma": self.sigma.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _first_feasible(ok, lo: float, horizon: float, step: float, tol: float) -> float:
    """Smallest t in (lo, horizon] with ok(t), for a monotone predicate: coarse scan, then bisection."""
    prev = lo
    t = lo + step
    while t <= horizon:
        if ok(t):
            a, b = prev, t
            while b - a > tol:
                m = 0.5 * (a + b)
                if ok(m):
                    b = m
                else:
                    a = m
            return b
        prev = t
        t += step
    raise SpliceInfeasibleError(f"no admissible anchor up to the horizon {horizon}")


def splice(annuli: AnnuliData, bound: BoundFunction, fillet: float = 0.25, room: float = 1.0,
           t_min: float = 0.0, horizon: float = 1e4, step: float = 0.5, tol: float = 1e-6,
           tail: float | None = None) -> SplicedWarping:
    """Translate the blocks [e_{j-1}, d_j] to [T_j, T_j + d_j - e_{j-1}] and bridge them.

    T_1 is the first anchor above ``t_min`` with lambda(T_1) > kappa_1; each
    later T_{j+1} is the first with lambda(T_{j+1}) > kappa_{j+1}, at least
    ``room`` on both sides of the junction S_j, and the gap condition
    alpha_j (T_{j+1} + e_{j-1} - T_j) + beta_j > sigma(e_j).
    The fillet half-width is min(``fillet``, room / 2), so the anchors do
    not depend on it. After the last block sigma continues along its
    last increasing law (up to ``tail``).
    """
    annuli.validate()
    if not room > 0:
        raise ValueError("room must be positive")
    sig = annuli.sigma
    N = annuli.count
    kappa = annuli.kappa
    lam = bound

    def lam_ok(j):
        return lambda T: float(lam(T)) > kappa[j - 1]

    anchors = [_first_feasible(lam_ok(1), t_min, horizon, step, tol)]
    junctions, widths, blocks, bridges = [], [], [], []
    pieces = []
    for j in range(1, N + 1):
        T = anchors[-1]
        e_prev = annuli.e_prev(j)
        length = annuli.d[j - 1] - e_prev
        block = (T, T + length)
        blocks.append(block)
        pieces.append(ShiftPiece(T, T + length, e_prev - T, sig))
        alpha, beta, gamma, delta = annuli.laws(j)
        if j == N:
            end = math.inf if tail is None else max(tail, block[1] + tol)
            pieces.append(AffinePiece(block[1], end, alpha, beta + alpha * (e_prev - T)))
            break
        fall_start = float(sig([annuli.e[j - 1]])[0])

        def crossing(Tn, T=T, e_prev=e_prev):
            # rising law in the new variable: alpha (t + e_prev - T) + beta
            # falling law: gamma (t + e_j - Tn) + delta, equal to sigma(e_j) at t = Tn
            return (gamma * (annuli.e[j - 1] - Tn) + delta - beta - alpha * (e_prev - T)) / (alpha - gamma)

        def ok(Tn, T=T, e_prev=e_prev, block=block):
            if not float(lam(Tn)) > kappa[j]:
                return False
            if not Tn > block[1]:
                return False
            if not alpha * (Tn + e_prev - T) + beta > fall_start:
                return False
            S = crossing(Tn)
            return S - block[1] >= room and Tn - S >= room

        Tn = _first_feasible(ok, block[1], horizon, step, tol)
        S = crossing(Tn)
        eps = min(fillet, 0.5 * room)
        value = alpha * (S + e_prev - T) + beta
        if value <= 0:
            raise SpliceInfeasibleError(f"bridge {j} meets at a nonpositive value")
        if S - eps > block[1]:
            pieces.append(AffinePiece(block[1], S - eps, alpha, beta + alpha * (e_prev - T)))
        fil = quartic_fillet(S, value, alpha, gamma, eps)
        assert np.all(fil.eval(np.linspace(S - eps, S + eps, 65))[2] <= 1e-12), "fillet is not concave"
        pieces.append(fil)
        if Tn > S + eps:
            e_j = annuli.e[j - 1]
            pieces.append(AffinePiece(S + eps, Tn, gamma, delta + gamma * (e_j - Tn)))
        junctions.append(S)
        widths.append(eps)
        bridges.append((block[1], Tn))
        anchors.append(Tn)
    warp = WarpingFunction(pieces)
    return SplicedWarping(tuple(anchors), tuple(junctions), tuple(widths), warp, bound, annuli,
                          tuple(blocks), tuple(bridges))


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class BoundReport:
    min_margin: float
    argmin: float
    t: np.ndarray
    sect_rad: np.ndarray
    sect_tg: np.ndarray
    lam: np.ndarray
    margin: np.ndarray

    @property
    def passed(self) -> bool:
        return self.min_margin >= 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "Sect_rad", "Sect_tg", "lambda", "margin"])
        for row in zip(self.t, self.sect_rad, self.sect_tg, self.lam, self.margin):
            w.writerow([format(float(x), ".17g") for x in row])
        return buf.getvalue()


def verify_bound(w, ts, bound: BoundFunction | None = None) -> BoundReport:
    """min over samples (and both sides of every junction) of min(Sect_rad, Sect_tg) + lambda.

    ``w`` is a SplicedWarping or a bare WarpingFunction with an explicit ``bound``.
    """
    sigma = w.sigma if isinstance(w, SplicedWarping) else w
    lam = bound if bound is not None else w.bound
    ts = np.sort(np.asarray(ts, dtype=float))
    knots = sigma.knots[(sigma.knots >= ts[0]) & (sigma.knots <= ts[-1])]
    rad_l, tg_l = curvature_profile(sigma, knots, side="left") if knots.size else (np.array([]),) * 2
    rad, tg = curvature_profile(sigma, ts, side="right")
    lam_t = np.asarray(lam(ts), dtype=float)
    margin = np.minimum(rad, tg) + lam_t
    i = int(np.argmin(margin))
    best, arg = float(margin[i]), float(ts[i])
    if knots.size:
        m_l = np.minimum(rad_l, tg_l) + np.asarray(lam(knots), dtype=float)
        kl = int(np.argmin(m_l))
        if m_l[kl] < best:
            best, arg = float(m_l[kl]), float(knots[kl])
    return BoundReport(best, arg, ts, rad, tg, lam_t, margin)


def translation_defect(w: SplicedWarping, samples: int = 257) -> float:
    """max |profile(sigma~, t) - profile(sigma, t + e_{j-1} - T_j)| over the block interiors."""
    worst = 0.0
    for j, (lo, hi) in enumerate(w.blocks, start=1):
        ts = np.linspace(lo, hi, samples)[1:-1]
        off = w.annuli.e_prev(j) - w.anchors[j - 1]
        a = curvature_profile(w.sigma, ts, side="right")
        b = curvature_profile(w.annuli.sigma, ts + off, side="right")
        worst = max(worst, max(float(np.max(np.abs(x - y))) for x, y in zip(a, b)))
    return worst


# --------------------------------------------------------------------------
# synthetic input


def synthetic_annuli(kappa=(1.0, 2.0, 3.0), base: float = 3.0, rise: float = 0.5,
                     wiggle: float = 0.8, safety: float = 0.8) -> AnnuliData:
    """Warping function with one oscillating annulus per kappa entry.

    Each annulus: falling law (slope -rise) into a convex corner, a tent of
    slopes +-wiggle, another convex corner, a rising law (slope rise), a
    concave corner and the next falling law. Convex fillet widths are chosen
    so the radial curvature floor is ``safety * kappa_k``.
    """
    kappa = tuple(float(k) for k in kappa)
    if any(k <= 0 for k in kappa):
        raise ValueError("synthetic annuli need positive kappa")
    knots = [(0.0, base + 2.0)]
    widths = []
    a, b, c, d, e, f = ([] for _ in range(6))
    t, s = 4.0, base
    knots.append((t, s))
    jump = wiggle + rise
    for k, kap in enumerate(kappa):
        w_conv = min(0.45, 3.0 * jump / (4.0 * s * safety * kap))
        widths.append(w_conv)  # corner at (t, s): -rise -> +wiggle
        a.append(t - w_conv)
        t1, s1 = t + 1.5, s + 1.5 * wiggle
        knots.append((t1, s1))
        widths.append(0.3)  # concave tent top
        t2, s2 = t1 + 1.5, s
        knots.append((t2, s2))
        widths.append(w_conv)  # corner: -wiggle -> +rise
        b.append(t2 + w_conv)
        t3, s3 = t2 + 4.0, s + 4.0 * rise
        knots.append((t3, s3))
        widths.append(0.3)  # concave: +rise -> -rise
        c.append(t2 + w_conv + 0.5)
        d.append(t3 - 0.3 - 0.1)
        e.append(t3 + 0.3 + 0.1)
        t4, s4 = t3 + 4.0, s
        f.append(t4 - 0.5)
        if k < len(kappa) - 1:
            knots.append((t4, s4))
        t, s = t4, s4
    knots.append((t + 1.0, s - rise))
    # first interior knot joins the initial descent to the first corner
    widths = [0.3] + widths
    knots = [knots[0], (2.0, base + 1.0)] + knots[1:]
    sigma = filleted_polyline(knots, widths)
    return AnnuliData(sigma, a, b, c, d, e, f, kappa, start=2.5)
