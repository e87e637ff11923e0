"""Pointwise geometry of the graph hypersurface x -> (x, f(x)) in R^{n+1}.

Every routine is vectorized over an (N, n) array of chart points and uses
the closed-form derivatives supplied by the function object; no finite
differences appear here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convexlab import GraphFunction


class DegeneratePlaneError(ValueError):
    pass


@dataclass(frozen=True)
class MetricAt:
    g: np.ndarray  # (N, n, n)
    g_inv: np.ndarray
    sqrt_det: np.ndarray  # (N,)


@dataclass(frozen=True)
class ShapeAt:
    h: np.ndarray  # (N, n, n) second fundamental form
    christoffel: np.ndarray  # (N, k, i, j) = Gamma^k_ij


@dataclass(frozen=True)
class TangentPlane:
    X: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True)
class GraphGeometry:
    """Derivatives of f plus metric and shape data at a batch of points."""

    points: np.ndarray
    df: np.ndarray
    d2f: np.ndarray
    metric: MetricAt
    shape: ShapeAt

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def _points(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def metric_from_gradient(df) -> MetricAt:
    n = df.shape[1]
    w = 1.0 + np.sum(df * df, axis=1)
    outer = df[:, :, None] * df[:, None, :]
    eye = np.eye(n)[None]
    return MetricAt(eye + outer, eye - outer / w[:, None, None], np.sqrt(w))


def geometry(f: GraphFunction, x) -> GraphGeometry:
    x = _points(x)
    _, df, d2f = f.derivatives(x)
    metric = metric_from_gradient(df)
    w = metric.sqrt_det
    h = d2f / w[:, None, None]
    gamma = np.einsum("nij,nk->nkij", d2f, df) / (w**2)[:, None, None, None]
    return GraphGeometry(x, df, d2f, metric, ShapeAt(h, gamma))


def induced_metric(f: GraphFunction, x) -> MetricAt:
    _, df, _ = f.derivatives(_points(x))
    return metric_from_gradient(df)


def second_fundamental_form(f: GraphFunction, x) -> ShapeAt:
    return geometry(f, x).shape


def _field_derivatives(u, x):
    if isinstance(u, GraphFunction):
        _, du, d2u = u.derivatives(x)
        return du, d2u
    du, d2u = u
    return np.atleast_2d(du), np.asarray(d2u).reshape(-1, x.shape[1], x.shape[1])


def covariant_hessian(u, f: GraphFunction, x, geo: GraphGeometry | None = None) -> np.ndarray:
    """Hess u_ij = d_ij u - Gamma^k_ij d_k u.

    ``u`` is a GraphFunction or a pair ``(du, d2u)`` of chart derivatives.
    """
    geo = geometry(f, x) if geo is None else geo
    du, d2u = _field_derivatives(u, geo.points)
    return d2u - np.einsum("nkij,nk->nij", geo.shape.christoffel, du)


def laplace_beltrami(u, f: GraphFunction, x, geo: GraphGeometry | None = None) -> np.ndarray:
    """Metric trace of the covariant Hessian (the nonpositive Laplacian)."""
    geo = geometry(f, x) if geo is None else geo
    return np.einsum("nij,nij->n", geo.metric.g_inv, covariant_hessian(u, f, x, geo))


def laplace_beltrami_divergence(u, f: GraphFunction, x) -> np.ndarray:
    """(1/sqrt g) d_i (sqrt g g^ij d_j u), expanded with the closed-form d(sqrt g g^ij)."""
    x = _points(x)
    _, df, d2f = f.derivatives(x)
    du, d2u = _field_derivatives(u, x)
    w = 1.0 + np.sum(df * df, axis=1)
    rw = np.sqrt(w)
    # d_i W = 2 f_k f_ki
    dw = 2.0 * np.einsum("nk,nki->ni", df, d2f)
    n = x.shape[1]
    eye = np.eye(n)[None]
    a = rw[:, None, None] * eye - (df[:, :, None] * df[:, None, :]) / rw[:, None, None]
    # sum_i d_i A^{ij}
    div_a = (0.5 * dw / rw[:, None]
             + 0.5 * np.einsum("ni,ni,nj->nj", dw, df, df) / (rw**3)[:, None]
             - (np.einsum("nii->n", d2f)[:, None] * df + np.einsum("ni,nij->nj", df, d2f)) / rw[:, None])
    return (np.einsum("nj,nj->n", div_a, du) + np.einsum("nij,nij->n", a, d2u)) / rw


def sectional_curvature(f: GraphFunction, x, plane: TangentPlane, geo: GraphGeometry | None = None,
                        tol: float = 1e-14) -> np.ndarray:
    """Gauss equation: (h(X,X)h(Y,Y) - h(X,Y)^2) / (g(X,X)g(Y,Y) - g(X,Y)^2)."""
    geo = geometry(f, x) if geo is None else geo
    N, n = geo.points.shape
    X = np.broadcast_to(np.asarray(plane.X, dtype=float), (N, n))
    Y = np.broadcast_to(np.asarray(plane.Y, dtype=float), (N, n))

    def form(m, a, b):
        return np.einsum("ni,nij,nj->n", a, m, b)

    g, h = geo.metric.g, geo.shape.h
    gram = form(g, X, X) * form(g, Y, Y) - form(g, X, Y) ** 2
    scale = form(g, X, X) * form(g, Y, Y)
    if np.any(gram <= tol * scale):
        raise DegeneratePlaneError("tangent plane vectors are (nearly) linearly dependent")
    return (form(h, X, X) * form(h, Y, Y) - form(h, X, Y) ** 2) / gram


def sample_planes(n: int, count: int, rng=None) -> list[TangentPlane]:
    """Coordinate planes followed by random ones (n = 2 has a single plane anyway)."""
    rng = np.random.default_rng(0) if rng is None else rng
    eye = np.eye(n)
    planes = [TangentPlane(eye[i], eye[j]) for i in range(n) for j in range(i + 1, n)]
    while len(planes) < count:
        X, Y = rng.standard_normal((2, n))
        if abs(np.linalg.det(np.array([[X @ X, X @ Y], [X @ Y, Y @ Y]]))) > 1e-6:
            planes.append(TangentPlane(X, Y))
    return planes[:max(count, 1)]


def min_sectional_curvature(f: GraphFunction, x, planes: list[TangentPlane]) -> tuple[float, np.ndarray]:
    """Smallest sampled sectional curvature and the point where it occurs."""
    geo = geometry(f, x)
    vals = np.min([sectional_curvature(f, x, P, geo) for P in planes], axis=0)
    i = int(np.argmin(vals))
    return float(vals[i]), geo.points[i]
