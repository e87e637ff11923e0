"""Calderon-Zygmund ratio experiments along a smoothing sweep.

For each smoothing radius delta the pipeline is: smooth convex graph,
Dirichlet Poisson solve on a chart ball around the cutoff, localization
v = chi u, then the L^p norms of v, Delta v and the covariant Hessian of v.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .convexlab import (ConvexSpec, GraphFunction, SmoothedFunction, certificate_points, choose_centers,
                        verify_convexity)
from .graphgeo import geometry
from .meshdisc import ChartGrid, CutoffSpec, ScalarField, build_cutoff, holder_quotient, lp_norm, tensor_norm
from .poisson import SourceSpec, assemble_operator, build_source, grid_derivatives, localize, solve

CSV_COLUMNS = ("delta", "norm_v", "norm_lap", "norm_hess", "ratio", "morrey_proxy", "max_grad_at_centers")


class ConvexityGateError(RuntimeError):
    def __init__(self, delta: float, min_eigenvalue: float):
        super().__init__(f"convexity gate failed at delta={delta!r} (min eigenvalue {min_eigenvalue:.3g})")
        self.delta = delta
        self.min_eigenvalue = min_eigenvalue


class UnsharpWitnessError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    n: int = 2
    p: float = 4.0
    count: int = 8
    deltas: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    h: float = 0.00625
    cutoff: CutoffSpec = field(default_factory=lambda: CutoffSpec.concentric((0.0, 0.0), 0.13, 0.26))
    source: SourceSpec = field(default_factory=lambda: SourceSpec((0.06, 0.0), 0.2, 0.35))
    tol: float = 1e-10
    seed: int = 0
    # perturbation ball and amplitude scale of the convex graph
    ball_center: tuple[float, ...] = (0.0, 0.0)
    ball_radius: float = 320.0
    eta0: float = 156.8  # cone slope eta_1 / eps_1 = 1 at the first center
    solve_radius: float | None = None  # default: 3 * cutoff outer radius
    experimental: bool = False  # admit p <= n

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "ball_center", tuple(float(c) for c in self.ball_center))

    def validate(self) -> "SweepConfig":
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.p > self.n and not self.experimental:
            raise ValueError(f"p must exceed n (got p={self.p}, n={self.n})")
        if any(d <= 0 for d in self.deltas):
            raise ValueError("smoothing radii must be positive")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("delta schedule must be strictly decreasing")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if len(self.cutoff.outer_center) != self.n or len(self.source.center) != self.n:
            raise ValueError("cutoff and source centers must have dimension n")
        if self.radius <= self.cutoff.outer_radius + 2 * self.h:
            raise ValueError("solve ball must strictly contain the cutoff support")
        self.spec().validate()
        return self

    @property
    def radius(self) -> float:
        return 3.0 * self.cutoff.outer_radius if self.solve_radius is None else self.solve_radius

    @property
    def under_resolved(self) -> bool:
        """True when the smallest delta is below 4h (the delta scale is not resolved)."""
        return bool(self.deltas) and min(self.deltas) < 4 * self.h * (1 - 1e-12)

    def spec(self, delta: float = 0.0, count: int | None = None) -> ConvexSpec:
        count = self.count if count is None else count
        bumps = choose_centers(self.ball_center, self.ball_radius, count, self.eta0)
        return ConvexSpec(self.n, self.ball_center, self.ball_radius, tuple(bumps), delta, self.eta0, self.seed)

    def baseline(self) -> "SweepConfig":
        return replace(self, count=0)

    def to_dict(self) -> dict:
        c, s = self.cutoff, self.source
        return {
            "n": self.n, "p": self.p, "K": self.count, "deltas": list(self.deltas), "h": self.h,
            "cutoff": {"inner_center": list(c.inner_center), "inner_radius": c.inner_radius,
                       "outer_center": list(c.outer_center), "outer_radius": c.outer_radius},
            "source": {"center": list(s.center), "radius": s.radius, "working_radius": s.working_radius},
            "tol": self.tol, "seed": self.seed,
            "ball": {"center": list(self.ball_center), "radius": self.ball_radius},
            "eta0": self.eta0, "solve_radius": self.solve_radius, "experimental": self.experimental,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        base = cls()
        kw = {}
        simple = {"n": "n", "p": "p", "K": "count", "h": "h", "tol": "tol", "seed": "seed",
                  "eta0": "eta0", "solve_radius": "solve_radius", "experimental": "experimental"}
        for key, attr in simple.items():
            if key in d:
                kw[attr] = d[key]
        if "deltas" in d:
            kw["deltas"] = tuple(d["deltas"])
        if "cutoff" in d:
            c = d["cutoff"]
            kw["cutoff"] = CutoffSpec(tuple(c["inner_center"]), float(c["inner_radius"]),
                                      tuple(c["outer_center"]), float(c["outer_radius"]))
        if "source" in d:
            s = d["source"]
            kw["source"] = SourceSpec(tuple(s["center"]), float(s["radius"]), s.get("working_radius"))
        if "ball" in d:
            kw["ball_center"] = tuple(d["ball"]["center"])
            kw["ball_radius"] = float(d["ball"]["radius"])
        return replace(base, **kw)


@dataclass(frozen=True)
class CZRecord:
    delta: float
    norm_v: float
    norm_lap: float
    norm_hess: float
    ratio: float
    morrey_proxy: float
    max_grad_at_centers: float
    norm_grad: float = math.nan
    under_resolved: bool = False

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# single-level quantities


def cz_ratio(norm_v: float, norm_lap: float, norm_hess: float) -> float:
    """||Hess v|| / (||Delta v|| + ||v||)."""
    den = norm_lap + norm_v
    if not den > 0:
        raise ZeroDivisionError("CZ ratio undefined for v = 0")
    return norm_hess / den


def covariant_hessian_field(values, f, grid: ChartGrid, geo=None) -> np.ndarray:
    """Covariant Hessian of a grid field on the masked nodes: second differences minus Gamma du."""
    du, d2u = grid_derivatives(values, grid.h)
    m = grid.mask
    geo = geometry(f, grid.masked_points()) if geo is None else geo
    return d2u[m] - np.einsum("nkij,nk->nij", geo.shape.christoffel, du[m])


def gradient_norm_field(values, f, grid: ChartGrid, geo=None) -> ScalarField:
    """|grad u|_g on the mask; stencils read off-mask values as stored (zero for compact support)."""
    du, _ = grid_derivatives(values, grid.h)
    geo = geometry(f, grid.masked_points()) if geo is None else geo
    out = np.zeros(grid.shape)
    out[grid.mask] = np.sqrt(np.einsum("ni,nij,nj->n", du[grid.mask], geo.metric.g_inv, du[grid.mask]))
    return ScalarField(grid, out)


def lp_triple(v: ScalarField, lap_v: ScalarField, f, p: float, geo=None, weights=None) -> tuple[float, float, float]:
    """(||v||_p, ||Delta v||_p, ||Hess v||_p) with Riemannian quadrature."""
    grid = v.grid
    geo = geometry(f, grid.masked_points()) if geo is None else geo
    w = grid.volume_weights(f) if weights is None else weights
    H = covariant_hessian_field(v.values, f, grid, geo)
    hess = np.zeros(grid.shape)
    hess[grid.mask] = tensor_norm(H, geo.metric.g_inv)
    return (lp_norm(v, f, p, w), lp_norm(lap_v, f, p, w), lp_norm(ScalarField(grid, hess), f, p, w))


def cz_lower_bound_via_morrey(v: ScalarField, lap_v: ScalarField, f, p: float, anchors=(),
                              norms: tuple[float, float] | None = None, **kw) -> float:
    """Hoelder quotient of |grad v|_g with exponent 1 - n/p over (||Delta v|| + ||v||).

    Proportional to a lower bound on the CZ constant; the Morrey constant
    itself is left out.
    """
    n = v.grid.dimension
    if not p > n:
        raise ValueError(f"Morrey proxy needs p > n (got p={p}, n={n})")
    if norms is None:
        w = v.grid.volume_weights(f)
        norms = (lp_norm(v, f, p, w), lp_norm(lap_v, f, p, w))
    den = norms[0] + norms[1]
    if not den > 0:
        raise ZeroDivisionError("Morrey proxy undefined for v = 0")
    grad = gradient_norm_field(v.values, f, v.grid)
    return holder_quotient(grad, f, 1.0 - n / p, anchors=anchors, **kw) / den


# --------------------------------------------------------------------------
# sweep


class _Memo(GraphFunction):
    """Caches derivative batches of an expensive evaluator by point-array content."""

    def __init__(self, f: GraphFunction):
        self.inner = f
        self.dimension = f.dimension
        self.spec = getattr(f, "spec", None)
        self._store: dict = {}

    def derivatives(self, x):
        x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
        key = (x.shape, hash(x.tobytes()))
        if key not in self._store:
            self._store[key] = self.inner.derivatives(x)
        return self._store[key]


def _solve_grid(config: SweepConfig) -> ChartGrid:
    c = np.asarray(config.cutoff.outer_center)
    return ChartGrid.ball(c, config.radius, config.h, pad=1)


def _center_nodes(spec: ConvexSpec, grid: ChartGrid, region: float, center) -> list[tuple[int, ...]]:
    nodes = []
    for b in spec.bumps:
        y = np.asarray(b.center)
        if np.linalg.norm(y - center) < region:
            node = grid.nearest_node(y)
            if grid.mask[node]:
                nodes.append(node)
    return nodes


def run_level(config: SweepConfig, f: SmoothedFunction, delta: float, gate: bool = True) -> CZRecord:
    f = _Memo(f)
    grid = _solve_grid(config)
    pts = grid.masked_points()
    geo = geometry(f, pts)
    if gate and f.spec.bumps:
        lo = float(np.linalg.eigvalsh(geo.d2f)[:, 0].min())
        if not lo > 0:
            raise ConvexityGateError(delta, lo)
    weights = grid.volume_weights(f)
    op = assemble_operator(f, grid, "dirichlet")
    _, src = build_source(f, grid, config.source, weights)
    rep = solve(op, src, tol=config.tol)
    chi = build_cutoff(config.cutoff)
    loc = localize(rep.solution, chi, f, op)
    nv, nl, nh = lp_triple(loc.v, loc.lap_v, f, config.p, geo, weights)
    ratio = cz_ratio(nv, nl, nh)

    outer = config.cutoff
    centers = _center_nodes(f.spec, grid, outer.outer_radius, np.asarray(outer.outer_center))
    gu = gradient_norm_field(rep.solution.values, f, grid, geo)
    max_grad = max((float(gu.values[c]) for c in centers), default=0.0)

    # Hoelder quotient restricted to the cutoff support (v vanishes outside)
    sup = np.linalg.norm(grid.coordinates() - np.asarray(outer.outer_center), axis=-1) < outer.outer_radius + 2 * grid.h
    sub = grid.with_mask(grid.mask & sup)
    vsub = ScalarField(sub, np.where(sub.mask, loc.v.values, 0.0))
    rng = np.random.default_rng(config.seed)
    morrey = cz_lower_bound_via_morrey(vsub, loc.lap_v, f, config.p, anchors=centers,
                                       norms=(nv, nl), rng=rng)
    ngrad = lp_norm(gradient_norm_field(loc.v.values, f, grid, geo), f, config.p, weights)
    return CZRecord(float(delta), nv, nl, nh, ratio, morrey, max_grad, ngrad,
                    under_resolved=bool(0 < delta < 4 * config.h * (1 - 1e-12)))


def run_sweep(config: SweepConfig, gate_points=None) -> list[CZRecord]:
    """One record per smoothing radius, in schedule order.

    Each level is gated on convexity twice: over ``gate_points`` (default:
    the certificate grid of the whole perturbation ball) and over the solve
    grid nodes.
    """
    config.validate()
    if not config.deltas:
        return []
    pts = certificate_points(config.spec()) if gate_points is None else gate_points
    out = []
    for delta in config.deltas:
        f = SmoothedFunction(config.spec(delta).validate())
        lo = verify_convexity(f, pts)
        if not lo > 0:
            raise ConvexityGateError(delta, lo)
        out.append(run_level(config, f, delta))
    return out


def run_baseline(config: SweepConfig, h: float | None = None, solve_radius: float | None = None) -> CZRecord:
    """The unperturbed paraboloid (K = 0) through the same pipeline."""
    cfg = config.baseline()
    if h is not None:
        cfg = replace(cfg, h=h)
    if solve_radius is not None:
        cfg = replace(cfg, solve_radius=solve_radius)
    f = SmoothedFunction(cfg.spec(0.0, count=0))
    return run_level(cfg, f, 0.0, gate=False)


def check_convexity(config: SweepConfig, delta: float, points=None) -> float:
    f = SmoothedFunction(config.spec(delta).validate())
    if points is None:
        points = _solve_grid(config).masked_points()
    return verify_convexity(f, points)


# --------------------------------------------------------------------------
# Sobolev gap


@dataclass(frozen=True)
class SobolevGapReport:
    ratios: tuple[float, ...]
    normalized_v: tuple[float, ...]  # ||v_j|| / (||Delta v_j|| + ||v_j||)
    normalized_lap: tuple[float, ...]
    hessian_partial: tuple[float, ...]  # sum_{j<=J} ratio(j) / j^2
    harmonic_partial: tuple[float, ...]  # sum_{j<=J} 1/j
    data_partial: tuple[float, ...]  # sum_{j<=J} 1/j^2
    lp_norm_v: float
    lp_norm_lap: float
    p: float

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def sobolev_gap_series(records, p: float = 4.0) -> SobolevGapReport:
    """Weighted witness series F_J = sum_j j^-2 v_j / (||Delta v_j|| + ||v_j||).

    ``records[j-1]`` is the witness for index j and must have ratio >= j.
    """
    records = list(records)
    for j, r in enumerate(records, start=1):
        if r.ratio < j:
            raise UnsharpWitnessError(f"witness {j} has ratio {r.ratio:.6g} < {j}")
    ratios, nv, nl, hp, hm, dp = [], [], [], [], [], []
    hs = hr = ds = 0.0
    sv = sl = 0.0
    for j, r in enumerate(records, start=1):
        den = r.norm_lap + r.norm_v
        a, b = r.norm_v / den, r.norm_lap / den
        ratios.append(r.ratio)
        nv.append(a)
        nl.append(b)
        hs += r.ratio / j**2
        hr += 1.0 / j
        ds += 1.0 / j**2
        hp.append(hs)
        hm.append(hr)
        dp.append(math.fsum(1.0 / k**2 for k in range(1, j + 1)))
        sv += (a / j**2) ** p
        sl += (b / j**2) ** p
    return SobolevGapReport(tuple(ratios), tuple(nv), tuple(nl), tuple(hp), tuple(hm), tuple(dp),
                            sv ** (1 / p), sl ** (1 / p), p)


def select_witnesses(records, J: int):
    """For j = 1..J the first record (in schedule order) with ratio >= j, or None."""
    out = []
    for j in range(1, J + 1):
        out.append(next((r for r in records if r.ratio >= j and not r.under_resolved), None))
    return out


# --------------------------------------------------------------------------
# output


def records_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def summary(config: SweepConfig, records, baseline: CZRecord | None = None) -> dict:
    ratios = [r.ratio for r in records]
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    out = {
        "config": config.to_dict(),
        "records": len(records),
        "ratio_increasing": increasing,
        "morrey_increasing": all(b.morrey_proxy > a.morrey_proxy for a, b in zip(records, records[1:])),
        "under_resolved": [r.delta for r in records if r.under_resolved],
    }
    if baseline is not None:
        out["baseline_ratio"] = baseline.ratio
        if records:
            out["final_over_baseline"] = records[-1].ratio / baseline.ratio
    return out


def summary_json(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True)
