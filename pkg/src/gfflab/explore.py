"""Frontier explorations of level sets, the ring observable, and exact
conditional statistics.

The discrete exploration grows shells of open vertices from the inner box
and records the closed vertices it bumps into; the metric variant walks
mesh chains on the low-conductance edge family and stops at the first mesh
point whose value drops into the slack band around the level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DomainEmptyError, RangeError
from .gfield import (FieldSample, MetricFieldSample, green_row_sums,
                     harmonic_extension)
from .lattice import BoxSpec, inner_box, inner_boundary
from .levelset import FOUR_CONN, level_set, mask_vertices, vertex_mask


def sparse_threshold(n: int, chi: float) -> float:
    return n * math.exp(-math.log(n) ** chi)


# ---------------------------------------------------------------------------
# The observable X


@dataclass
class Observable:
    value: float
    ring: frozenset


def observable_ring(box: BoxSpec, beta: float) -> frozenset:
    ring = inner_boundary(box, (1.0 + beta) * box.n / 2.0)
    if not ring:
        raise DomainEmptyError("observable ring is empty")
    return ring


def observable(fld: FieldSample, beta: float) -> Observable:
    ring = observable_ring(fld.box, beta)
    val = sum(fld.value(v) for v in ring) / len(ring)
    return Observable(val, ring)


def observable_batch(box: BoxSpec, beta: float, grids: np.ndarray) -> np.ndarray:
    """Observable values for a (k, n, n) stack of field grids."""
    ring = observable_ring(box, beta)
    mask = vertex_mask(box, ring)
    return grids[:, mask].mean(axis=1)


def observable_variance(box: BoxSpec, beta: float) -> float:
    """Exact Var X: quarter of the ring-pair Green sum over the ring size squared."""
    ring = observable_ring(box, beta)
    sums = green_row_sums(box, box.boundary, ring)
    total = sum(sums[v] for v in ring)
    return 0.25 * total / len(ring) ** 2


def variance_gap(box: BoxSpec, alpha: float, beta: float) -> float:
    """Exact Var X minus its value for the field killed on the inner box."""
    if not (0.0 < alpha < beta < 1.0):
        raise RangeError("need 0 < alpha < beta < 1")
    ring = observable_ring(box, beta)
    full = green_row_sums(box, box.boundary, ring)
    killed = box.boundary | inner_box(box, alpha * box.n)
    reduced = green_row_sums(box, killed, ring)
    s_full = sum(full[v] for v in ring)
    s_red = sum(reduced.get(v, 0.0) for v in ring)
    gap = 0.25 * (s_full - s_red) / len(ring) ** 2
    assert gap > -1e-12, "killing can only reduce the Green sum"
    return max(gap, 0.0)


# ---------------------------------------------------------------------------
# Discrete exploration


@dataclass
class ExplorationTrace:
    """Shells A_i, cumulative closed sets B_i and explored regions I_i."""

    box: BoxSpec
    lam: float
    alpha: float
    chi: float
    a_sets: list
    b_sets: list
    i_sets: list
    tau: int | None
    threshold: float
    hit_boundary: bool

    @property
    def explored(self) -> frozenset:
        return self.i_sets[-1]

    def summary_csv(self) -> str:
        out = ["step,frontier,closed,tau"]
        tau = "" if self.tau is None else self.tau
        for i, (a, b) in enumerate(zip(self.a_sets, self.b_sets)):
            out.append(f"{i},{len(a)},{len(b)},{tau}")
        return "\n".join(out) + "\n"


def explore_discrete(fld: FieldSample, lam: float, alpha: float, chi: float) -> ExplorationTrace:
    """Grow open shells from the inner box; closed contacts accumulate.

    A_0 is the open part of the inner box, B_0 the closed part of its
    ring; step i+1 examines the unexplored neighbors of A_i.  Stops on
    contact with the box boundary or when the frontier dies out.
    """
    if not (0.0 < alpha < 1.0):
        raise RangeError("alpha must lie in (0, 1)")
    box = fld.box
    open_mask = level_set(fld, lam).open_mask
    inner = vertex_mask(box, inner_box(box, alpha * box.n))
    ring = vertex_mask(box, inner_boundary(box, alpha * box.n))
    bdry = vertex_mask(box, box.boundary)
    a = inner & open_mask
    b = ring & ~open_mask
    explored = inner.copy()
    a_sets = [mask_vertices(box, a)]
    b_sets = [mask_vertices(box, b)]
    i_sets = [mask_vertices(box, explored)]
    hit_boundary = False
    while a.any() and not hit_boundary:
        grown = ndimage.binary_dilation(a, structure=FOUR_CONN) & ~explored
        a = grown & open_mask
        b = b | (grown & ~open_mask)
        explored = explored | grown
        a_sets.append(mask_vertices(box, a))
        b_sets.append(mask_vertices(box, b))
        i_sets.append(mask_vertices(box, explored))
        if (grown & bdry).any():
            hit_boundary = True
    thr = sparse_threshold(box.n, chi)
    tau = None
    for i, s in enumerate(a_sets):
        if len(s) <= thr:
            tau = i
            break
    return ExplorationTrace(box, lam, alpha, chi, a_sets, b_sets, i_sets,
                            tau, thr, hit_boundary)


# ---------------------------------------------------------------------------
# Metric exploration


@dataclass
class MetricExplorationTrace:
    """One-sided mesh exploration (above lam, or below -lam for the mirror)."""

    side: str  # "above" or "below"
    lam: float
    eps: float
    a_sets: list  # lattice-vertex shells
    b_points: list  # (edge_index, mesh_index, value) stopping points
    explored_vertices: frozenset
    explored_mesh: np.ndarray  # bool, shape of the e(1) mesh array
    modulus_violations: int


@dataclass
class MetricExplorationPair:
    above: MetricExplorationTrace
    below: MetricExplorationTrace
    stop_index: int | None
    threshold: float


def _explore_side(mfield: MetricFieldSample, lam: float, eps: float,
                  alpha: float, side: str) -> MetricExplorationTrace:
    box = mfield.field.box
    spec = mfield.spec
    fam = spec.edge_families[0]
    vals = mfield.mesh_values[fam.name]
    if side == "above":
        passable = vals > lam + eps
        vertex_ok = {v: mfield.field.value(v) > lam + eps for v in box.vertices}
    else:
        passable = vals < -lam - eps
        vertex_ok = {v: mfield.field.value(v) < -lam - eps for v in box.vertices}
    edge_index = {e: i for i, e in enumerate(spec.edges)}
    inner = inner_box(box, alpha * box.n)
    a0 = frozenset(v for v in inner if vertex_ok[v])
    a_sets = [a0]
    explored_v = set(inner)
    explored_mesh = np.zeros(vals.shape, dtype=bool)
    b_points = []
    violations = 0
    frontier = set(a0)
    n_mesh = vals.shape[1]
    while frontier:
        nxt = set()
        for u in sorted(frontier):
            for w in box.neighbors(u):
                e = (u, w) if (u, w) in edge_index else (w, u)
                ei = edge_index[e]
                forward = e[0] == u
                order = range(1, n_mesh - 1) if forward else range(n_mesh - 2, 0, -1)
                blocked = None
                for k in order:
                    if passable[ei, k]:
                        explored_mesh[ei, k] = True
                    else:
                        blocked = k
                        break
                if blocked is not None:
                    explored_mesh[ei, blocked] = True
                    b_points.append((ei, blocked, float(vals[ei, blocked])))
                    prev = blocked - 1 if forward else blocked + 1
                    if abs(vals[ei, blocked] - vals[ei, prev]) > eps:
                        violations += 1
                    continue
                if w in explored_v:
                    continue
                explored_v.add(w)
                if vertex_ok[w]:
                    nxt.add(w)
                else:
                    b_points.append((ei, n_mesh - 1 if forward else 0,
                                     float(mfield.field.value(w))))
        a_sets.append(frozenset(nxt))
        if not nxt:
            break
        frontier = nxt
    if not a0:
        a_sets = [a0]
    return MetricExplorationTrace(side, lam, eps, a_sets, b_points,
                                  frozenset(explored_v), explored_mesh, violations)


def explore_metric(mfield: MetricFieldSample, lam: float, eps: float,
                   alpha: float, chi: float) -> MetricExplorationPair:
    """Two one-sided explorations along the low-conductance edge mesh.

    Modulus violations (a mesh jump past the slack band in one step) are
    counted per trace so conditioned statistics can exclude the run.
    """
    above = _explore_side(mfield, lam, eps, alpha, "above")
    below = _explore_side(mfield, lam, eps, alpha, "below")
    n = mfield.field.box.n
    thr = sparse_threshold(n, chi)
    stop = None
    depth = max(len(above.a_sets), len(below.a_sets))
    for i in range(depth):
        na = len(above.a_sets[i]) if i < len(above.a_sets) else 0
        nb = len(below.a_sets[i]) if i < len(below.a_sets) else 0
        if na + nb <= thr:
            stop = i
            break
    return MetricExplorationPair(above, below, stop, thr)


# ---------------------------------------------------------------------------
# Exact conditional statistics of X


@dataclass
class ConditionalStats:
    mean: float
    variance: float
    label_means: dict = field(default_factory=dict)


def conditional_stats(box: BoxSpec, pinned: dict, beta: float,
                      labels: dict | None = None) -> ConditionalStats:
    """Exact mean and variance of X given pinned values.

    The mean is the ring average of the harmonic extension; the variance
    comes from the Green function killed additionally on the pinned set.
    When labels maps pinned vertices to tags, the mean is also split into
    one harmonic-extension contribution per tag.
    """
    ring = observable_ring(box, beta)
    pinned = {v: float(x) for v, x in pinned.items() if not box.is_boundary(v)}
    if not pinned:
        var = observable_variance(box, beta)
        return ConditionalStats(0.0, var)
    ext = harmonic_extension(box, pinned)
    mean = float(np.mean([ext[box.grid_index(v)] for v in sorted(ring)]))
    killed = box.boundary | frozenset(pinned)
    sums = green_row_sums(box, killed, ring)
    total = sum(sums.get(v, 0.0) for v in ring)
    var = 0.25 * total / len(ring) ** 2
    out = ConditionalStats(mean, var)
    if labels:
        tags = sorted(set(labels.values()))
        for tag in tags:
            part = {v: x for v, x in pinned.items() if labels.get(v) == tag}
            zeros = {v: 0.0 for v in pinned if labels.get(v) != tag}
            ext_t = harmonic_extension(box, {**part, **zeros})
            out.label_means[tag] = float(
                np.mean([ext_t[box.grid_index(v)] for v in sorted(ring)]))
    return out
