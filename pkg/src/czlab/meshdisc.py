"""Uniform chart grids, sampled fields, Riemannian quadrature, cutoffs, grid geodesics."""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._smooth import radial_derivatives, smoothstep
from .convexlab import GraphFunction
from .graphgeo import metric_from_gradient

MAGIC = b"CZF1"
HEADER = struct.Struct("<4sI3Id4x")
# max slope of the smoothstep, attained at t = 1/2
STEP_SLOPE = 2.0


class EmptyMaskError(ValueError):
    pass


class DisconnectedMaskError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ChartGrid:
    """Nodes lower + h * index over an axis-aligned box, with a working mask.

    ``factor`` scales the per-node volume h^n: 1 for interior nodes, the
    trapezoid fractions on faces of a box-shaped domain.
    """

    lower: np.ndarray
    h: float
    shape: tuple[int, ...]
    mask: np.ndarray
    factor: np.ndarray
    ball: tuple | None = None  # (center, radius) when the mask is a ball

    @classmethod
    def box(cls, lower, upper, h):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        counts = np.rint((upper - lower) / h).astype(int)
        if np.any(np.abs(counts * h - (upper - lower)) > 1e-9 * np.max(upper - lower)):
            raise ValueError("box sides must be integer multiples of the spacing")
        shape = tuple(int(c) + 1 for c in counts)
        factor = np.ones(shape)
        for axis, m in enumerate(shape):
            sl = [slice(None)] * len(shape)
            for end in (0, m - 1):
                sl[axis] = end
                factor[tuple(sl)] *= 0.5
        return cls(lower, float(h), shape, np.ones(shape, dtype=bool), factor)

    @classmethod
    def ball(cls, center, radius, h, pad=2):
        """Grid whose mask is the open ball; the center is a node."""
        center = np.asarray(center, dtype=float)
        m = int(np.ceil(radius / h - 1e-12)) + pad
        lower = center - m * h
        shape = (2 * m + 1,) * center.size
        grid = cls(lower, float(h), shape, np.ones(shape, dtype=bool), np.ones(shape))
        inside = np.linalg.norm(grid.coordinates() - center, axis=-1) < radius
        return cls(lower, float(h), shape, inside, np.ones(shape), (tuple(center), float(radius)))

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axes(self):
        return [self.lower[d] + self.h * np.arange(m) for d, m in enumerate(self.shape)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def masked_points(self) -> np.ndarray:
        return self.coordinates()[self.mask]

    def nearest_node(self, x) -> tuple[int, ...]:
        idx = np.rint((np.asarray(x, dtype=float) - self.lower) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ValueError("point outside the grid box")
        return tuple(int(i) for i in idx)

    def with_mask(self, mask) -> "ChartGrid":
        return ChartGrid(self.lower, self.h, self.shape, np.asarray(mask, dtype=bool), self.factor)

    def node_point(self, node) -> np.ndarray:
        return self.lower + self.h * np.asarray(node, dtype=float)

    def volume_weights(self, f: GraphFunction | None = None) -> np.ndarray:
        """sqrt(det g) * h^n per node (zero off the mask)."""
        w = self.factor * self.h**self.dimension * self.mask
        if f is not None:
            sq = np.zeros(self.shape)
            _, df, _ = f.derivatives(self.masked_points())
            sq[self.mask] = np.sqrt(1.0 + np.sum(df * df, axis=1))
            w = w * sq
        return w


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: ChartGrid
    values: np.ndarray
    tag: str = "derived"

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values[self.grid.mask])):
            raise ValueError("field has non-finite values on the mask")

    @classmethod
    def sample(cls, grid: ChartGrid, fn, tag="derived"):
        vals = np.zeros(grid.shape)
        vals[grid.mask] = fn(grid.masked_points())
        return cls(grid, vals, tag)

    def masked(self) -> np.ndarray:
        return self.values[self.grid.mask]

    def __mul__(self, t: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * t, self.tag)

    __rmul__ = __mul__

    # -- export --

    def to_csv(self, path) -> None:
        pts = self.grid.masked_points()
        vals = self.masked()
        n = self.grid.dimension
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["value"])
            for p, v in zip(pts, vals):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    def to_binary(self, path) -> None:
        """32-byte header (magic, n, dims, h) then row-major float64 values, NaN off the mask."""
        n = self.grid.dimension
        if n > 3:
            raise ValueError("binary export supports n <= 3")
        dims = list(self.grid.shape) + [0] * (3 - n)
        data = np.where(self.grid.mask, self.values, np.nan).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, n, *dims, self.grid.h))
            fh.write(data.tobytes(order="C"))


def read_binary(path) -> tuple[np.ndarray, float]:
    """Values (NaN off the mask) and spacing from a binary field file."""
    raw = Path(path).read_bytes()
    magic, n, d0, d1, d2, h = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a field file")
    shape = (d0, d1, d2)[:n]
    return np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(shape).copy(), h


# --------------------------------------------------------------------------
# cutoffs


@dataclass(frozen=True)
class CutoffSpec:
    inner_center: tuple[float, ...]
    inner_radius: float
    outer_center: tuple[float, ...]
    outer_radius: float

    def __post_init__(self):
        object.__setattr__(self, "inner_center", tuple(float(c) for c in self.inner_center))
        object.__setattr__(self, "outer_center", tuple(float(c) for c in self.outer_center))
        if not self.inner_radius > 0:
            raise ValueError("inner radius must be positive")
        if not self.margin > 0:
            raise ValueError("inner ball closure must lie in the interior of the outer ball")

    @classmethod
    def concentric(cls, center, inner, outer):
        return cls(tuple(center), inner, tuple(center), outer)

    @property
    def margin(self) -> float:
        gap = np.linalg.norm(np.subtract(self.inner_center, self.outer_center))
        return self.outer_radius - self.inner_radius - gap


class Cutoff(GraphFunction):
    """chi = S((r_T - |x - c_T|) / margin): 1 on the inner ball, 0 outside the outer one."""

    def __init__(self, spec: CutoffSpec):
        self.spec = spec
        self.dimension = len(spec.outer_center)
        self._c = np.array(spec.outer_center)

    @property
    def slope_bound(self) -> float:
        return STEP_SLOPE / self.spec.margin

    def derivatives(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = x - self._c
        r = np.linalg.norm(z, axis=1)
        m = self.spec.margin
        s, ds, dds = smoothstep((self.spec.outer_radius - r) / m)
        grad, hess = radial_derivatives(z, r, -ds / m, dds / m**2)
        return s, grad, hess


def build_cutoff(spec: CutoffSpec) -> Cutoff:
    return Cutoff(spec)


# --------------------------------------------------------------------------
# norms


def lp_norm_values(values, weights, p: float) -> float:
    if not p > 1:
        raise ValueError("exponent p must exceed 1")
    if not np.any(weights > 0):
        raise EmptyMaskError("quadrature over an empty mask")
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.sum(v**p * weights) ** (1.0 / p))


def lp_norm(field: ScalarField, f: GraphFunction | None, p: float, weights=None) -> float:
    """(sum |v|^p sqrt(det g) h^n)^(1/p) over masked nodes."""
    if not field.grid.mask.any():
        raise EmptyMaskError("quadrature over an empty mask")
    w = field.grid.volume_weights(f) if weights is None else weights
    return lp_norm_values(field.values[field.grid.mask], w[field.grid.mask], p)


def tensor_norm(H, g_inv) -> np.ndarray:
    """|H|_g = sqrt(g^ik g^jl H_ij H_kl) for stacks of matrices."""
    t = np.einsum("nik,njl,nij,nkl->n", g_inv, g_inv, H, H)
    return np.sqrt(np.maximum(t, 0.0))


def tensor_norm_field(H, f: GraphFunction, grid: ChartGrid) -> ScalarField:
    """Pointwise metric norm of a masked stack of symmetric matrices (shape (M, n, n))."""
    pts = grid.masked_points()
    _, df, _ = f.derivatives(pts)
    vals = np.zeros(grid.shape)
    vals[grid.mask] = tensor_norm(np.asarray(H), metric_from_gradient(df).g_inv)
    return ScalarField(grid, vals, "derived")


# --------------------------------------------------------------------------
# grid geodesics


class GeodesicGraph:
    """Shortest paths on masked nodes with the 3^n - 1 neighbor stencil.

    Edge length is the chart step measured in the induced metric at the
    edge midpoint.
    """

    def __init__(self, f: GraphFunction, grid: ChartGrid):
        self.grid = grid
        n = grid.dimension
        index = -np.ones(grid.shape, dtype=np.int64)
        index[grid.mask] = np.arange(int(grid.mask.sum()))
        self.index = index
        coords = grid.coordinates()
        rows, cols, lens = [], [], []
        for step in itertools.product((-1, 0, 1), repeat=n):
            if step <= (0,) * n:
                continue  # one orientation per edge
            src = tuple(slice(max(0, -s), m - max(0, s)) for s, m in zip(step, grid.shape))
            dst = tuple(slice(max(0, s), m + min(0, s)) for s, m in zip(step, grid.shape))
            a, b = index[src], index[dst]
            ok = (a >= 0) & (b >= 0)
            if not ok.any():
                continue
            mid = 0.5 * (coords[src][ok] + coords[dst][ok])
            _, df, _ = f.derivatives(mid)
            dx = grid.h * np.array(step, dtype=float)
            lens.append(np.sqrt(dx @ dx + (df @ dx) ** 2))
            rows.append(a[ok])
            cols.append(b[ok])
        m = int(grid.mask.sum())
        self.matrix = sparse.coo_matrix(
            (np.concatenate(lens), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)).tocsr()
        self._cache: dict[int, np.ndarray] = {}

    def node_id(self, node) -> int:
        i = int(self.index[tuple(node)])
        if i < 0:
            raise ValueError(f"node {node} is not in the mask")
        return i

    def distances_from(self, node) -> np.ndarray:
        """Distances from ``node`` to every masked node (mask order)."""
        i = self.node_id(node)
        if i not in self._cache:
            self._cache[i] = csgraph.dijkstra(self.matrix, directed=False, indices=i)
        return self._cache[i]

    def distance(self, x, y) -> float:
        d = float(self.distances_from(x)[self.node_id(y)])
        if not np.isfinite(d):
            raise DisconnectedMaskError(f"nodes {x} and {y} are not connected in the mask")
        return d


def geodesic_distance(f: GraphFunction, grid: ChartGrid, x, y, graph: GeodesicGraph | None = None) -> float:
    graph = GeodesicGraph(f, grid) if graph is None else graph
    return graph.distance(x, y)


def holder_quotient(field: ScalarField, f: GraphFunction, exponent: float, pair_budget: int = 2000,
                    anchors=(), graph: GeodesicGraph | None = None, rng=None,
                    source_pool: int = 16) -> float:
    """sup |v(x) - v(y)| / d(x, y)^exponent over sampled node pairs.

    Every anchor node (e.g. a singular center) is paired with all masked
    nodes; on top of that ``pair_budget`` random pairs are drawn with
    sources from a pool of at most ``source_pool`` random nodes.
    """
    if not exponent > 0:
        raise ValueError("Hoelder exponent must be positive (needs p > n)")
    grid = field.grid
    graph = GeodesicGraph(f, grid) if graph is None else graph
    vals = field.masked()
    best = 0.0

    def scan(node, targets=None):
        d = graph.distances_from(node)
        v0 = vals[graph.node_id(node)]
        t = slice(None) if targets is None else targets
        dt, vt = d[t], vals[t]
        ok = np.isfinite(dt) & (dt > 0)
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(vt[ok] - v0) / dt[ok] ** exponent))

    for node in anchors:
        best = max(best, scan(node))
    if pair_budget > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        nodes = np.argwhere(grid.mask)
        pool = nodes[rng.choice(len(nodes), size=min(source_pool, len(nodes)), replace=False)]
        per = max(1, pair_budget // len(pool))
        m = len(vals)
        for node in pool:
            best = max(best, scan(tuple(node), rng.integers(0, m, size=per)))
    return best
