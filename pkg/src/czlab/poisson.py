"""Discrete Laplace-Beltrami operator on a graph chart and localized Poisson solves.

The operator is the P1 finite-element stiffness matrix on the Kuhn
triangulation of the chart grid with the divergence-form coefficient
sqrt(det g) g^{-1} taken at simplex centroids. On a flat chart it reduces to
the (2n+1)-point Laplacian scaled by h^(n-2). With the lumped mass M the
discrete equation for Delta u = g reads K u = -M g (K approximates -Delta).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .convexlab import GraphFunction
from .graphgeo import geometry, metric_from_gradient
from .meshdisc import ChartGrid, Cutoff, ScalarField


class SolverError(RuntimeError):
    pass


class MeanViolationError(ValueError):
    pass


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class SourceSpec:
    center: tuple[float, ...]
    radius: float
    working_radius: float | None = None  # recentring ball; None = whole mask

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("source radius must be positive")
        if self.working_radius is not None and not self.working_radius >= self.radius:
            raise ValueError("working ball must contain the source support")


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: ChartGrid
    matrix: sparse.csr_matrix  # on unknowns, approximates -Delta (times mass)
    mass: np.ndarray  # lumped mass per unknown
    unknowns: np.ndarray  # bool over the grid
    bc: str

    def to_unknowns(self, values) -> np.ndarray:
        return np.asarray(values)[self.unknowns]

    def to_grid(self, x) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.unknowns] = x
        return out

    def apply_laplacian(self, values) -> np.ndarray:
        """Discrete Delta of a grid field (zero off the unknowns)."""
        x = self.to_unknowns(values)
        return self.to_grid(-(self.matrix @ x) / self.mass)

    def weights(self) -> np.ndarray:
        return self.to_grid(self.mass)


@dataclass(frozen=True, eq=False)
class SolveReport:
    solution: ScalarField
    residual: float
    iterations: int
    mean_solution: float
    mean_source: float

    def to_dict(self) -> dict:
        return {"residual": self.residual, "iterations": self.iterations,
                "mean_solution": self.mean_solution, "mean_source": self.mean_source}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# source


def _weighted_mean(values, weights) -> float:
    return float(np.sum(values * weights) / np.sum(weights))


def build_source(f: GraphFunction, grid: ChartGrid, spec: SourceSpec, weights=None) -> tuple[ScalarField, ScalarField]:
    """Lipschitz bump (1 on B_{R/2}, 0 off B_R, slope 2/R) and its recentred copy.

    Returns ``(bump, source)``; the source is supported on the working ball
    and has zero weighted mean there.
    """
    pts = grid.coordinates()
    c = np.asarray(spec.center)
    r = np.linalg.norm(pts - c, axis=-1)
    if grid.ball is not None:
        gc, gr = grid.ball
        room = gr - np.linalg.norm(c - np.asarray(gc))
        if room < 2.0 * spec.radius - 1e-12:
            raise ValueError("source ball B_R(center) needs a margin >= R inside the chart")
    if spec.working_radius is not None and grid.ball is not None:
        if np.linalg.norm(c - np.asarray(grid.ball[0])) + spec.working_radius > grid.ball[1]:
            raise ValueError("working ball leaves the chart")
    bump = np.clip(2.0 - 2.0 * r / spec.radius, 0.0, 1.0) * grid.mask
    work = grid.mask.copy()
    if spec.working_radius is not None:
        work &= r < spec.working_radius
    w = grid.volume_weights(f) if weights is None else weights
    w = w * work
    src = np.where(work, bump - _weighted_mean(bump, w), 0.0)
    return ScalarField(grid, bump, "source"), ScalarField(grid, src, "source")


# --------------------------------------------------------------------------
# operator


def _kuhn_simplices(n: int):
    """(permutation offsets (n+1, n), barycentric gradients (n+1, n)) per Kuhn simplex of the unit cube."""
    out = []
    for perm in itertools.permutations(range(n)):
        verts = np.zeros((n + 1, n))
        for k, axis in enumerate(perm):
            verts[k + 1] = verts[k]
            verts[k + 1, axis] = 1.0
        E = (verts[1:] - verts[0]).T
        G = np.linalg.inv(E)  # rows: gradients of phi_1..phi_n
        grads = np.vstack([-G.sum(axis=0), G])
        out.append((verts.astype(int), grads))
    return out


def _crossing_fraction(a, b, center, radius):
    """theta in (0, 1] with |a + theta (b - a) - c| = R, a inside, b outside."""
    d = b - a
    e = a - center
    A = np.sum(d * d, axis=1)
    B = 2.0 * np.sum(d * e, axis=1)
    C = np.sum(e * e, axis=1) - radius**2
    theta = (-B + np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))) / (2 * A)
    return np.clip(theta, 1e-3, 1.0)


def assemble_operator(f: GraphFunction, grid: ChartGrid, bc: str = "dirichlet",
                      fitted_boundary: bool = True) -> DiscreteOperator:
    """Stiffness matrix of -Delta on the masked nodes.

    ``bc="dirichlet"``: u = 0 off the mask, every simplex touching the mask
    contributes; with ``fitted_boundary`` the positive edge couplings into
    exterior nodes are rescaled by the fraction of the edge inside the ball
    (Shortley-Weller), which keeps the scheme symmetric and second order.
    ``bc="neumann"``: only simplices with all vertices in the mask.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    n = grid.dimension
    h = grid.h
    shape = np.array(grid.shape)
    node_id = np.arange(grid.node_count).reshape(grid.shape)
    coords = grid.coordinates()
    cells = np.stack(np.meshgrid(*[np.arange(m - 1) for m in grid.shape], indexing="ij"), axis=-1).reshape(-1, n)
    vol = h**n / math.factorial(n)
    rows, cols, vals = [], [], []
    mass = np.zeros(grid.node_count)
    mask_flat = grid.mask.ravel()
    for verts, grads in _kuhn_simplices(n):
        corner = cells[:, None, :] + verts[None]  # (C, n+1, n)
        ids = node_id[tuple(corner[..., d] for d in range(n))]
        inmask = mask_flat[ids]
        keep = inmask.all(axis=1) if bc == "neumann" else inmask.any(axis=1)
        if not keep.any():
            continue
        ids = ids[keep]
        centroid = grid.lower + h * (cells[keep] + verts.mean(axis=0))
        _, df, _ = f.derivatives(centroid)
        met = metric_from_gradient(df)
        coef = met.sqrt_det[:, None, None] * met.g_inv
        G = grads / h
        local = vol * np.einsum("ai,nij,bj->nab", G, coef, G)
        rows.append(np.repeat(ids, n + 1, axis=1).ravel())
        cols.append(np.tile(ids, (1, n + 1)).ravel())
        vals.append(local.ravel())
        if bc == "neumann":
            np.add.at(mass, ids.ravel(), np.repeat(vol * met.sqrt_det / (n + 1), n + 1))
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(grid.node_count,) * 2).tocsr()
    K.sum_duplicates()
    if bc == "dirichlet":
        unknown = mask_flat.copy()
        _, df, _ = f.derivatives(coords.reshape(-1, n)[unknown])
        mass_u = (grid.factor.ravel()[unknown] * h**n) * np.sqrt(1.0 + np.sum(df * df, axis=1))
        Ku = K[unknown][:, unknown].tocsr()
        if fitted_boundary and grid.ball is not None:
            Ku = Ku + sparse.diags(_fitted_correction(K, grid, unknown, coords.reshape(-1, n)))
    else:
        unknown = mask_flat & (mass > 0)
        mass_u = mass[unknown]
        Ku = K[unknown][:, unknown].tocsr()
    Ku = (0.5 * (Ku + Ku.T)).tocsr()
    Ku.eliminate_zeros()
    return DiscreteOperator(grid, Ku, mass_u, unknown.reshape(grid.shape), bc)


def _fitted_correction(K, grid, unknown, pts):
    """Extra diagonal w (1/theta - 1) for positive couplings w = -K_ab, a inside, b outside."""
    center, radius = np.asarray(grid.ball[0]), grid.ball[1]
    coo = K.tocoo()
    sel = unknown[coo.row] & ~unknown[coo.col] & (coo.data < 0)
    a, b, w = coo.row[sel], coo.col[sel], -coo.data[sel]
    theta = _crossing_fraction(pts[a], pts[b], center, radius)
    extra = np.zeros(grid.node_count)
    np.add.at(extra, a, w * (1.0 / theta - 1.0))
    return extra[unknown]


# --------------------------------------------------------------------------
# solver


def conjugate_gradient(A, b, tol=1e-10, maxiter=None, x0=None, project=None):
    """Jacobi-preconditioned CG; returns (x, relative residual, iterations).

    ``project`` (optional) maps vectors onto the solvable subspace, used for
    the singular Neumann system.
    """
    n = len(b)
    maxiter = 20 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    z = dinv * r
    if project is not None:
        z = project(z)
    d = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ad = A @ d
        alpha = rz / (d @ Ad)
        x += alpha * d
        if it % 50 == 0:
            r = b - A @ x
        else:
            r -= alpha * Ad
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, float(res), it
        z = dinv * r
        if project is not None:
            z = project(z)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise SolverError(f"CG did not reach {tol:g} within {maxiter} iterations (residual {res:.3g})")


def solve(op: DiscreteOperator, source: ScalarField, tol: float = 1e-10,
          maxiter: int | None = None) -> SolveReport:
    """Solve Delta u = source (K u = -M g); Neumann solutions have zero weighted mean."""
    g = op.to_unknowns(source.values)
    m = op.mass
    mean_g = float(m @ g / m.sum())
    if op.bc == "neumann":
        scale = float(m @ np.abs(g) / m.sum())
        if abs(mean_g) > 1e-10 * max(scale, 1e-300) and abs(mean_g) > 1e-300:
            raise MeanViolationError(f"Neumann source has weighted mean {mean_g:.3g}")
    b = -m * g
    project = None
    if op.bc == "neumann":
        b = b - m * (b.sum() / m.sum())
        ones = np.ones_like(m) / np.sqrt(len(m))

        def project(v):
            return v - ones * (ones @ v)

    x, res, its = conjugate_gradient(op.matrix, b, tol=tol, maxiter=maxiter, project=project)
    if op.bc == "neumann":
        x -= (m @ x) / m.sum()
    u = ScalarField(op.grid, op.to_grid(x), "solution")
    return SolveReport(u, res, its, float(m @ x / m.sum()), mean_g)


# --------------------------------------------------------------------------
# discrete derivatives and localization


def grid_derivatives(values, h: float):
    """Central first differences and compact second differences on the grid.

    Mixed second derivatives use the four-point cross stencil; one-sided
    second-order stencils on the outermost nodes.
    """
    values = np.asarray(values, dtype=float)
    n = values.ndim
    du = np.stack([np.gradient(values, h, axis=i, edge_order=2) for i in range(n)], axis=-1)
    d2u = np.empty(values.shape + (n, n))
    for i in range(n):
        d2 = np.empty_like(values)
        mid = [slice(None)] * n
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        mid[i], lo[i], hi[i] = slice(1, -1), slice(0, -2), slice(2, None)
        d2[tuple(mid)] = (values[tuple(hi)] - 2 * values[tuple(mid)] + values[tuple(lo)]) / h**2
        for end, near in ((0, (0, 1, 2, 3)), (-1, (-1, -2, -3, -4))):
            e = [slice(None)] * n
            e[i] = end
            a, b, c, d = (np.take(values, k, axis=i) for k in near)
            d2[tuple(e)] = (2 * a - 5 * b + 4 * c - d) / h**2
        d2u[..., i, i] = d2
        for j in range(i + 1, n):
            dij = np.gradient(du[..., i], h, axis=j, edge_order=2)
            d2u[..., i, j] = d2u[..., j, i] = dij
    return du, d2u


@dataclass(frozen=True, eq=False)
class Localized:
    v: ScalarField
    lap_v: ScalarField
    grad_u: np.ndarray  # (M, n) chart gradient of u on the mask
    cutoff: Cutoff


def localize(u: ScalarField, chi: Cutoff, f: GraphFunction, op: DiscreteOperator) -> Localized:
    """v = chi u and Delta v = chi Delta u + u Delta chi + 2 <grad u, grad chi>_g.

    Delta u is the discrete operator applied to u; grad u by central
    differences; chi enters through its closed-form derivatives.
    """
    grid = u.grid
    pts = grid.coordinates()
    flat_pts = pts.reshape(-1, grid.dimension)
    chi_v, chi_g, chi_h = chi.derivatives(flat_pts)
    support = (chi_v > 0).reshape(grid.shape)
    interior = op.unknowns.copy()
    for axis in range(grid.dimension):
        interior &= np.roll(op.unknowns, 1, axis) & np.roll(op.unknowns, -1, axis)
    if np.any(support & ~interior):
        raise SupportError("cutoff support reaches the boundary of the solve domain")
    lap_u = op.apply_laplacian(u.values)
    du, _ = grid_derivatives(u.values, grid.h)
    m = grid.mask
    geo = geometry(f, flat_pts[m.ravel()])
    cg = chi_g[m.ravel()]
    ch = chi_h[m.ravel()]
    lap_chi = np.einsum("nij,nij->n", geo.metric.g_inv,
                        ch - np.einsum("nkij,nk->nij", geo.shape.christoffel, cg))
    cross = np.einsum("ni,nij,nj->n", du[m], geo.metric.g_inv, cg)
    chi_m = chi_v[m.ravel()]
    lap_v = np.zeros(grid.shape)
    lap_v[m] = chi_m * lap_u[m] + u.values[m] * lap_chi + 2.0 * cross
    lap_v[~support] = 0.0
    v = np.where(support, chi_v.reshape(grid.shape) * u.values, 0.0)
    return Localized(ScalarField(grid, v, "derived"), ScalarField(grid, lap_v, "derived"), du[m], chi)
