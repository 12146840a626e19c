"""Green's functions, free-field samplers and Brownian-bridge extensions.

The zero-boundary field on a box has covariance (1/4) G where G is the
simple-random-walk Green's function killed on the boundary.  Two samplers
are provided: a dense factorization of (1/4) G (small boxes, serves as an
oracle) and a spectral factorization of the precision form, which is the
graph Laplacian of the box and is diagonalized exactly by the type-I
discrete sine transform.  Metric-graph extensions attach independent
rate-2 Brownian bridges to each edge, evaluated at mesh points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainEmptyError, InvalidSizeError, RangeError
from .lattice import BoxSpec, MetricGraphSpec, build_box

DENSE_LIMIT = 10_000
SOLVER_TOL = 1e-10


# ---------------------------------------------------------------------------
# Green matrices


@dataclass(frozen=True)
class GreenMatrix:
    """Expected-visit-count matrix on the non-killed vertices."""

    box: BoxSpec
    killed: frozenset
    vertices: tuple  # non-killed vertices, lexicographic
    mat: np.ndarray

    @property
    def index(self):
        return _vertex_index(self.vertices)

    def value(self, u, v):
        idx = self.index
        return self.mat[idx[u], idx[v]]


@lru_cache(maxsize=64)
def _vertex_index(vertices):
    return {v: i for i, v in enumerate(vertices)}


def _step_matrix(box: BoxSpec, free: tuple) -> sp.csr_matrix:
    """One-step kernel among free vertices; steps onto killed sites vanish."""
    idx = {v: i for i, v in enumerate(free)}
    rows, cols = [], []
    for v in free:
        i = idx[v]
        x, y = v
        for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            j = idx.get(w)
            if j is not None:
                rows.append(i)
                cols.append(j)
    data = np.full(len(rows), 0.25)
    n = len(free)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def green_matrix(box: BoxSpec, killed) -> GreenMatrix:
    """Exact solve of (I - P) G = I on the non-killed vertices."""
    killed = frozenset(killed)
    if not killed >= box.boundary:
        raise ValueError("killed set must contain the box boundary")
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if not free:
        raise DomainEmptyError("all vertices killed")
    p = _step_matrix(box, free)
    a = sp.identity(len(free), format="csc") - p
    g = spla.spsolve(a, np.eye(len(free)))
    g = np.atleast_2d(g)
    if not np.allclose(g, g.T, atol=SOLVER_TOL):
        raise AssertionError("Green matrix not symmetric to solver tolerance")
    g = (g + g.T) / 2.0
    return GreenMatrix(box, killed, free, g)


def green_row_sums(box: BoxSpec, killed, targets) -> dict:
    """sum_{v in targets} G(u, v) for every free u, via one sparse solve.

    Avoids materializing G on large boxes.
    """
    killed = frozenset(killed)
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if not free:
        raise DomainEmptyError("all vertices killed")
    idx = {v: i for i, v in enumerate(free)}
    p = _step_matrix(box, free)
    rhs = np.zeros(len(free))
    for t in targets:
        if t in idx:
            rhs[idx[t]] = 1.0
    a = sp.identity(len(free), format="csc") - p.tocsc()
    y = spla.spsolve(a, rhs)
    return {v: y[i] for v, i in idx.items()}


# ---------------------------------------------------------------------------
# Field samples


@dataclass
class FieldSample:
    """Field values on the box grid; exactly zero on the boundary."""

    box: BoxSpec
    values: np.ndarray  # (n, n), values[gx, gy]
    method: str = "unknown"
    meta: dict = field(default_factory=dict)

    def value(self, v) -> float:
        gx, gy = self.box.grid_index(v)
        return float(self.values[gx, gy])

    def interior_vector(self) -> np.ndarray:
        return np.array([self.value(v) for v in self.box.interior])

    def dump(self, path) -> None:
        """Write the grid to CSV, row-major, with a provenance header."""
        seed = self.meta.get("seed", "")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n={self.box.n} method={self.method} seed={seed}\n")
            for row in self.values:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_field(path) -> FieldSample:
    """Read a field snapshot written by FieldSample.dump."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise RangeError("missing snapshot header")
        fields = dict(tok.split("=", 1) for tok in header[1:].split())
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    box = build_box(int(fields["n"]))
    grid = np.array(rows)
    if grid.shape != (box.n, box.n):
        raise RangeError("snapshot shape does not match its header")
    meta = {"seed": fields.get("seed", "")}
    return FieldSample(box, grid, fields.get("method", "unknown"), meta)


def _as_field(box, grid, method, **meta):
    grid = np.asarray(grid, dtype=float)
    grid[0, :] = grid[-1, :] = 0.0
    grid[:, 0] = grid[:, -1] = 0.0
    return FieldSample(box, grid, method, dict(meta))


@lru_cache(maxsize=16)
def _dense_chol(n: int) -> np.ndarray:
    box = BoxSpec(n)
    g = green_matrix(box, box.boundary)
    return np.linalg.cholesky(0.25 * g.mat)


@lru_cache(maxsize=32)
def _dst_eigenvalues(n: int) -> np.ndarray:
    m = n - 2  # interior side
    k = np.arange(1, m + 1)
    c = 2.0 * np.cos(np.pi * k / (m + 1))
    # precision (graph Laplacian) eigenvalues 4 - 2cos - 2cos
    return 4.0 - c[:, None] - c[None, :]


def sample_dgff_batch(box: BoxSpec, rng, k: int, method: str = "sparse") -> np.ndarray:
    """k independent field samples, returned as a (k, n, n) grid array."""
    n = box.n
    m = n - 2
    out = np.zeros((k, n, n))
    if method == "dense":
        if m * m > DENSE_LIMIT:
            raise InvalidSizeError("dense sampler limited to boxes with <= 1e4 interior")
        chol = _dense_chol(n)
        z = rng.standard_normal((k, m * m))
        out[:, 1:-1, 1:-1] = (z @ chol.T).reshape(k, m, m)
    elif method == "sparse":
        lam = _dst_eigenvalues(n)
        z = rng.standard_normal((k, m, m)) / np.sqrt(lam)[None, :, :]
        out[:, 1:-1, 1:-1] = scipy.fft.dstn(z, type=1, norm="ortho", axes=(1, 2))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def sample_dgff(box: BoxSpec, rng, method: str = "sparse") -> FieldSample:
    """One zero-boundary field sample with covariance (1/4) G."""
    grid = sample_dgff_batch(box, rng, 1, method)[0]
    return _as_field(box, grid, method)


def harmonic_extension(box: BoxSpec, pinned: dict) -> np.ndarray:
    """Grid of the discrete-harmonic extension of pinned values (0 on boundary)."""
    n = box.n
    grid = np.zeros((n, n))
    for v, val in pinned.items():
        gx, gy = box.grid_index(v)
        grid[gx, gy] = val
    free = tuple(
        v for v in box.interior if v not in pinned
    )
    if not free:
        return grid
    idx = {v: i for i, v in enumerate(free)}
    rows, cols, data = [], [], []
    rhs = np.zeros(len(free))
    for v in free:
        i = idx[v]
        rows.append(i)
        cols.append(i)
        data.append(4.0)
        x, y = v
        for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            j = idx.get(w)
            if j is not None:
                rows.append(i)
                cols.append(j)
                data.append(-1.0)
            else:
                wx, wy = box.grid_index(w)
                rhs[i] += grid[wx, wy]
    a = sp.csc_matrix((data, (rows, cols)), shape=(len(free), len(free)))
    sol = spla.spsolve(a, rhs)
    for v, i in idx.items():
        gx, gy = box.grid_index(v)
        grid[gx, gy] = sol[i]
    return grid


def sample_conditional_dgff(box: BoxSpec, pinned: dict, rng) -> FieldSample:
    """Harmonic extension of pinned values plus an independent killed field.

    The pinned set plays the role of the explored region: conditionally on
    it, the remaining field is the extension plus a zero-boundary field
    killed on (pinned set) union (box boundary).
    """
    pinned = {v: float(x) for v, x in pinned.items() if not box.is_boundary(v)}
    if not pinned:
        return sample_dgff(box, rng)
    for x in pinned.values():
        if not math.isfinite(x):
            raise ValueError("pinned values must be finite")
    grid = harmonic_extension(box, pinned)
    killed = box.boundary | frozenset(pinned)
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if free:
        g = green_matrix(box, killed)
        chol = np.linalg.cholesky(0.25 * g.mat)
        z = chol @ rng.standard_normal(len(free))
        for v, zi in zip(free, z):
            gx, gy = box.grid_index(v)
            grid[gx, gy] += zi
    return _as_field(box, grid, "conditional", pinned=sorted(pinned))


# ---------------------------------------------------------------------------
# Metric-graph extension and bridge formulas


@dataclass
class MetricFieldSample:
    """Vertex field plus bridge values at the mesh points of every edge.

    mesh_values[name] has shape (n_edges, n_interior + 2); column 0 and -1
    are the lattice endpoint values in edge order.
    """

    field: FieldSample
    spec: MetricGraphSpec
    mesh_values: dict


def sample_bridge_interior(a, b, length, n_interior, rng):
    """Interior mesh values of independent rate-2 bridges.

    a, b are arrays of shape (k,) of endpoint values; the return value has
    shape (k, n_interior).  Sequential conditioning: given the current
    value x at distance r from the far endpoint b, the value one mesh step
    delta further has mean x + (delta/r)(b - x) and variance
    2 delta (r - delta) / r.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = a.shape[0]
    delta = length / (n_interior + 1)
    out = np.empty((k, n_interior))
    x = a.copy()
    remaining = length
    for i in range(n_interior):
        var = 2.0 * delta * (remaining - delta) / remaining
        mean = x + (delta / remaining) * (b - x)
        x = mean + math.sqrt(var) * rng.standard_normal(k)
        out[:, i] = x
        remaining -= delta
    return out


def extend_to_metric(field: FieldSample, spec: MetricGraphSpec, rng) -> MetricFieldSample:
    """Decorate every metric edge with an independent rate-2 bridge."""
    if field.box != spec.base:
        raise ValueError("field and metric spec must share the same box")
    edges = spec.edges
    a = np.array([field.value(u) for u, _ in edges])
    b = np.array([field.value(v) for _, v in edges])
    mesh_values = {}
    for fam in spec.edge_families:
        inner = sample_bridge_interior(a, b, fam.length, fam.n_interior, rng)
        vals = np.column_stack([a, inner, b])
        mesh_values[fam.name] = vals
    return MetricFieldSample(field, spec, mesh_values)


def bridge_above_prob(a, b, lam, length) -> float:
    """P(rate-2 bridge from a to b over length L stays above lam).

    Reflection principle: 1 - exp(-(a - lam)(b - lam)/L), clamped to [0, 1];
    zero unless both endpoints exceed the level.
    """
    if length <= 0:
        raise RangeError(f"bridge length must be positive, got {length}")
    if a <= lam or b <= lam:
        return 0.0
    p = 1.0 - math.exp(-(a - lam) * (b - lam) / length)
    return min(max(p, 0.0), 1.0)
