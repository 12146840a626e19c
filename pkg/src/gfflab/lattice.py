"""Boxes, boundaries, adjacency and metric-graph specifications.

The basic domain is an N x N box of lattice points, centered at the origin
for odd N and at (1/2, 1/2) for even N.  All other modules share these
conventions, in particular the boundary definition (a vertex is boundary if
it has a lattice neighbor outside the box) and the nested sub-box family
V_x = V_floor(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

from .errors import InvalidSizeError, MeshTooCoarseError, RangeError

NEIGHBOR_STEPS = ((0, 1), (1, 0), (0, -1), (-1, 0))
STAR_STEPS = tuple(
    (dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)
)


def _coord_range(n):
    # odd n: -(n-1)/2 .. (n-1)/2, even n: -(n/2-1) .. n/2 (center (1/2,1/2))
    if n % 2 == 1:
        h = (n - 1) // 2
        return -h, h
    return -(n // 2 - 1), n // 2


@dataclass(frozen=True)
class BoxSpec:
    """An N x N box with the parity-dependent centering convention."""

    n: int
    lo: int = field(init=False)
    hi: int = field(init=False)

    def __post_init__(self):
        if self.n < 3:
            raise InvalidSizeError(f"box side must be >= 3, got {self.n}")
        lo, hi = _coord_range(self.n)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center_offset(self):
        return (0.0, 0.0) if self.n % 2 == 1 else (0.5, 0.5)

    def contains(self, v) -> bool:
        return self.lo <= v[0] <= self.hi and self.lo <= v[1] <= self.hi

    def is_boundary(self, v) -> bool:
        if not self.contains(v):
            return False
        return v[0] in (self.lo, self.hi) or v[1] in (self.lo, self.hi)

    @cached_property
    def vertices(self) -> frozenset:
        rng = range(self.lo, self.hi + 1)
        return frozenset((x, y) for x in rng for y in rng)

    @cached_property
    def boundary(self) -> frozenset:
        return frozenset(v for v in self.vertices if self.is_boundary(v))

    @cached_property
    def interior(self) -> tuple:
        """Interior vertices in lexicographic order."""
        rng = range(self.lo + 1, self.hi)
        return tuple((x, y) for x in rng for y in rng)

    @cached_property
    def interior_index(self) -> dict:
        return {v: i for i, v in enumerate(self.interior)}

    def neighbors(self, v):
        x, y = v
        return tuple(
            (x + dx, y + dy)
            for dx, dy in NEIGHBOR_STEPS
            if self.contains((x + dx, y + dy))
        )

    def star_neighbors(self, v):
        x, y = v
        return tuple(
            (x + dx, y + dy)
            for dx, dy in STAR_STEPS
            if self.contains((x + dx, y + dy))
        )

    def grid_index(self, v):
        """(row, col) index of v in an (n, n) array layout."""
        return v[0] - self.lo, v[1] - self.lo


def build_box(n: int) -> BoxSpec:
    """Build the N x N box; requires N >= 3 so an interior vertex exists."""
    return BoxSpec(int(n))


def inner_box_spec(box: BoxSpec, x) -> BoxSpec:
    """The concentric floor(x) x floor(x) sub-box, as a BoxSpec."""
    if not 1 <= x <= box.n:
        raise RangeError(f"inner box size {x} outside [1, {box.n}]")
    m = math.floor(x)
    if m < 3:
        raise RangeError(f"inner box of side {m} has no boundary/interior split")
    return BoxSpec(m)


def inner_box(box: BoxSpec, x) -> frozenset:
    """Vertex set of V_floor(x), following the parity centering of floor(x)."""
    if not 1 <= x <= box.n:
        raise RangeError(f"inner box size {x} outside [1, {box.n}]")
    m = math.floor(x)
    lo, hi = _coord_range(m)
    rng = range(lo, hi + 1)
    return frozenset((a, b) for a in rng for b in rng)


def inner_boundary(box: BoxSpec, x) -> frozenset:
    """Boundary ring of the inner sub-box V_floor(x)."""
    if not 1 <= x <= box.n:
        raise RangeError(f"inner box size {x} outside [1, {box.n}]")
    m = math.floor(x)
    lo, hi = _coord_range(m)
    ring = set()
    for a in range(lo, hi + 1):
        ring.update(((a, lo), (a, hi), (lo, a), (hi, a)))
    return frozenset(ring)


def lattice_edges(box: BoxSpec) -> tuple:
    """All nearest-neighbor edges with both endpoints in the box, u < v lex."""
    edges = []
    rng = range(box.lo, box.hi + 1)
    for x in rng:
        for y in rng:
            if x < box.hi:
                edges.append(((x, y), (x + 1, y)))
            if y < box.hi:
                edges.append(((x, y), (x, y + 1)))
    return tuple(edges)


@dataclass(frozen=True)
class EdgeFamily:
    name: str
    length: float
    conductance: float
    n_interior: int  # interior mesh points per edge

    @property
    def spacing(self):
        return self.length / (self.n_interior + 1)


@dataclass(frozen=True)
class MetricGraphSpec:
    """Metric (cable) realization of the box graph.

    family "single": one edge per lattice edge, conductance 1, length 1/2.
    family "two-edge": parallel edges e(1) (conductance 1/8, length 4) and
    e(2) (conductance 7/8, length 4/7).  In both cases conductance * length
    is 1/2 per metric edge, and parallel conductances sum to 1.
    """

    base: BoxSpec
    family: str
    mesh_density: int
    edge_families: tuple

    @cached_property
    def edges(self) -> tuple:
        return lattice_edges(self.base)


def build_metric_graph(box: BoxSpec, family: str, m: int) -> MetricGraphSpec:
    """Mesh the metric graph at m mesh points per unit length."""
    if m < 2:
        raise MeshTooCoarseError(f"mesh density must be >= 2, got {m}")
    if family == "single":
        fams = (EdgeFamily("e", 0.5, 1.0, max(1, round(m * 0.5))),)
    elif family == "two-edge":
        fams = (
            EdgeFamily("e1", 4.0, 1.0 / 8.0, max(1, round(m * 4.0))),
            EdgeFamily("e2", 4.0 / 7.0, 7.0 / 8.0, max(1, round(m * 4.0 / 7.0))),
        )
    else:
        raise ValueError(f"unknown edge family {family!r}")
    return MetricGraphSpec(box, family, int(m), fams)
