"""Level sets, chemical distances, crossings and minimal blocking contours.

A vertex is open at level lam when its field value is at most lam.  Open
connectivity is nearest-neighbor; closed blocking contours use
*-connectivity (all eight neighbors), the standard planar-duality pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .gfield import FieldSample
from .lattice import BoxSpec, inner_box, inner_boundary

FOUR_CONN = ndimage.generate_binary_structure(2, 1)
EIGHT_CONN = ndimage.generate_binary_structure(2, 2)


def vertex_mask(box: BoxSpec, vertices) -> np.ndarray:
    mask = np.zeros((box.n, box.n), dtype=bool)
    for v in vertices:
        gx, gy = box.grid_index(v)
        mask[gx, gy] = True
    return mask


def mask_vertices(box: BoxSpec, mask: np.ndarray) -> frozenset:
    lo = box.lo
    xs, ys = np.nonzero(mask)
    return frozenset((int(x) + lo, int(y) + lo) for x, y in zip(xs, ys))


@dataclass
class LevelSet:
    """Thresholded field: open iff the value is at most the level."""

    box: BoxSpec
    lam: float
    open_mask: np.ndarray
    field: FieldSample | None = None

    def is_open(self, v) -> bool:
        gx, gy = self.box.grid_index(v)
        return bool(self.open_mask[gx, gy])

    def open_set(self) -> frozenset:
        return mask_vertices(self.box, self.open_mask)


def level_set(field: FieldSample, lam: float) -> LevelSet:
    return LevelSet(field.box, lam, field.values <= lam, field)


def bfs_distance_grid(open_mask: np.ndarray, source_mask: np.ndarray) -> np.ndarray:
    """Graph distances within the open set from the open sources; -1 unreachable.

    Round-based dilation; each round extends all shortest paths by one step.
    """
    dist = np.full(open_mask.shape, -1, dtype=np.int64)
    frontier = source_mask & open_mask
    dist[frontier] = 0
    d = 0
    while frontier.any():
        grown = ndimage.binary_dilation(frontier, structure=FOUR_CONN)
        frontier = grown & open_mask & (dist < 0)
        d += 1
        dist[frontier] = d
    return dist


def chemical_distance(ls: LevelSet, a, b) -> float:
    """Shortest open-path length between the sets, or inf.

    Both endpoints must be open; the distance from a vertex to itself is 0
    exactly when it is open.
    """
    box = ls.box
    amask = vertex_mask(box, a) & ls.open_mask
    bmask = vertex_mask(box, b) & ls.open_mask
    if not amask.any() or not bmask.any():
        return math.inf
    if (amask & bmask).any():
        return 0
    dist = np.full(ls.open_mask.shape, -1, dtype=np.int64)
    frontier = amask
    dist[frontier] = 0
    d = 0
    while frontier.any():
        grown = ndimage.binary_dilation(frontier, structure=FOUR_CONN)
        frontier = grown & ls.open_mask & (dist < 0)
        d += 1
        if (frontier & bmask).any():
            return d
        dist[frontier] = d
    return math.inf


def _adjacent(mask: np.ndarray, structure=FOUR_CONN) -> np.ndarray:
    return ndimage.binary_dilation(mask, structure=structure) & ~mask


def has_crossing(ls: LevelSet, alpha: float, beta: float) -> bool:
    """Open path between the inner ring and the outer ring, both endpoints open."""
    box = ls.box
    ring = vertex_mask(box, inner_boundary(box, alpha * box.n))
    bring = vertex_mask(box, inner_boundary(box, beta * box.n))
    labels, _ = ndimage.label(ls.open_mask, structure=FOUR_CONN)
    inner_ids = np.unique(labels[ring & ls.open_mask])
    outer_ids = np.unique(labels[bring & ls.open_mask])
    inner_ids = inner_ids[inner_ids > 0]
    outer_ids = outer_ids[outer_ids > 0]
    return bool(np.isin(inner_ids, outer_ids).any())


@dataclass
class ContourResult:
    found: bool
    contour: frozenset
    enclosed: frozenset


def minimal_closed_contour(field: FieldSample, lam: float, alpha: float, beta: float) -> ContourResult:
    """Smallest closed *-contour separating the inner box from the outer ring.

    Grow the open clusters attached to open inner-ring vertices, fill the
    holes, then collect the closed blocking layer: on the grown region's
    edge where that edge is closed, immediately outside it where the edge
    is open.  The enclosed set is the grown region plus the contour.
    """
    if not (0.0 < alpha < beta < 1.0):
        raise ValueError("need 0 < alpha < beta < 1")
    box = field.box
    ls = level_set(field, lam)
    if has_crossing(ls, alpha, beta):
        return ContourResult(False, frozenset(), frozenset())
    open_mask = ls.open_mask
    inner = vertex_mask(box, inner_box(box, alpha * box.n))
    ring = vertex_mask(box, inner_boundary(box, alpha * box.n))
    bring = vertex_mask(box, inner_boundary(box, beta * box.n))
    labels, _ = ndimage.label(open_mask, structure=FOUR_CONN)
    seed_ids = np.unique(labels[ring & open_mask])
    seed_ids = seed_ids[seed_ids > 0]
    grown = inner | (np.isin(labels, seed_ids) if seed_ids.size else np.zeros_like(inner))
    comp, _ = ndimage.label(~grown, structure=FOUR_CONN)
    out_ids = np.unique(comp[bring])
    out_ids = out_ids[out_ids > 0]
    outside = np.isin(comp, out_ids)
    region = ~outside  # grown plus its holes
    closed = ~open_mask
    edge = region & _adjacent(outside, FOUR_CONN)
    layer_in = edge & closed
    open_edge = edge & open_mask
    layer_out = outside & closed & _adjacent(open_edge, FOUR_CONN)
    contour = layer_in | layer_out
    enclosed = region | contour
    return ContourResult(True, mask_vertices(box, contour), mask_vertices(box, enclosed))
