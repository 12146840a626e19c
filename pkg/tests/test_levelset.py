"""Level sets, chemical distances and the blocking contour."""

import math

import numpy as np
import pytest

from gfflab.gfield import FieldSample, sample_conditional_dgff, sample_dgff
from gfflab.lattice import build_box, inner_boundary, inner_box
from gfflab.levelset import (
    chemical_distance,
    has_crossing,
    level_set,
    minimal_closed_contour,
)


def constant_field(box, c):
    grid = np.full((box.n, box.n), float(c))
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = 0.0
    return FieldSample(box, grid, "fixture")


def bellman_ford_distance(box, open_set, a, b):
    """Exhaustive relaxation; deliberately different from the BFS code."""
    nodes = sorted(open_set)
    dist = {v: (0 if v in a else math.inf) for v in nodes}
    for _ in range(len(nodes)):
        changed = False
        for v in nodes:
            for w in box.neighbors(v):
                if w in dist and dist[v] + 1 < dist[w]:
                    dist[w] = dist[v] + 1
                    changed = True
        if not changed:
            break
    vals = [dist[v] for v in nodes if v in b]
    return min(vals) if vals else math.inf


def test_level_set_extremes():
    rng = np.random.default_rng(0)
    box = build_box(7)
    f = sample_dgff(box, rng)
    assert level_set(f, f.values.max() + 1).open_set() == box.vertices
    low = level_set(f, min(f.values.min(), 0) - 1)
    assert low.open_set() == frozenset()
    # at a barely negative level only strictly negative vertices stay open
    assert all(f.value(v) < 0 for v in level_set(f, -1e-12).open_set())


def test_level_sets_nested_in_lambda():
    rng = np.random.default_rng(5)
    box = build_box(9)
    f = sample_dgff(box, rng)
    sets = [level_set(f, lam).open_set() for lam in (-1.0, 0.0, 1.0)]
    assert sets[0] <= sets[1] <= sets[2]


def test_all_open_distance_is_l1():
    box = build_box(9)
    ls = level_set(constant_field(box, -1.0), 0.0)
    assert chemical_distance(ls, [(-3, -2)], [(2, 3)]) == 5 + 5
    assert chemical_distance(ls, [(0, 0)], [(0, 0)]) == 0


def test_closed_endpoint_is_infinite():
    rng = np.random.default_rng(1)
    box = build_box(9)
    f = sample_dgff(box, rng)
    ls = level_set(f, 0.0)
    closed = next(v for v in sorted(box.interior) if not ls.is_open(v))
    opened = next(v for v in sorted(box.interior) if ls.is_open(v))
    assert chemical_distance(ls, [opened], [closed]) == math.inf


def test_distance_matches_relaxation_oracle():
    rng = np.random.default_rng(20)
    box = build_box(20)
    for _ in range(5):
        f = sample_dgff(box, rng)
        ls = level_set(f, 0.3)
        a = [v for v in sorted(inner_boundary(box, 5)) if ls.is_open(v)]
        b = [v for v in sorted(inner_boundary(box, 15)) if ls.is_open(v)]
        if not a or not b:
            continue
        want = bellman_ford_distance(box, ls.open_set(), set(a), set(b))
        assert chemical_distance(ls, a, b) == want


def test_all_open_field_has_no_contour():
    box = build_box(16)
    res = minimal_closed_contour(constant_field(box, -1.0), 0.0, 0.25, 0.75)
    assert not res.found
    assert res.contour == frozenset()


def test_closed_annulus_contour_is_innermost_ring():
    box = build_box(17)
    grid = np.full((box.n, box.n), -1.0)
    for v in box.vertices:
        r = max(abs(v[0]), abs(v[1]))
        if 3 <= r <= 6:
            grid[box.grid_index(v)] = 2.0
    f = FieldSample(box, grid, "fixture")
    res = minimal_closed_contour(f, 0.0, 0.25, 0.9)
    assert res.found
    # the corner-less ring: diagonal steps keep it *-connected and it
    # still blocks every nearest-neighbor escape, so minimality drops the
    # four corners
    ring = {v for v in box.vertices if max(abs(v[0]), abs(v[1])) == 3
            and abs(v[0]) + abs(v[1]) < 6}
    assert res.contour == frozenset(ring)


def test_duality_on_random_fields():
    rng = np.random.default_rng(7)
    box = build_box(32)
    for _ in range(400):
        f = sample_dgff(box, rng)
        ls = level_set(f, 0.5)
        res = minimal_closed_contour(f, 0.5, 0.25, 0.75)
        a = [v for v in inner_boundary(box, 0.25 * 32) if ls.is_open(v)]
        b = [v for v in inner_boundary(box, 0.75 * 32) if ls.is_open(v)]
        crossing = bool(a) and bool(b) and chemical_distance(ls, a, b) < math.inf
        assert crossing == (not res.found)


def test_contour_vertices_are_closed_and_blocking():
    rng = np.random.default_rng(3)
    box = build_box(24)
    found = 0
    for _ in range(200):
        f = sample_dgff(box, rng)
        res = minimal_closed_contour(f, -0.3, 0.25, 0.75)
        if not res.found:
            continue
        found += 1
        assert all(f.value(v) > -0.3 for v in res.contour)
        # removing the contour disconnects the inner box from the outer ring
        allowed = box.vertices - res.contour
        seen = set(u for u in inner_box(box, 6) if u in allowed)
        frontier = list(seen)
        outer = inner_boundary(box, 0.75 * 24)
        while frontier:
            nxt = []
            for v in frontier:
                for w in box.neighbors(v):
                    if w in allowed and w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        assert not (seen & outer)
    assert found > 0


def test_contour_measurable_from_inside():
    # resampling the field outside the enclosed region leaves the contour
    # unchanged
    rng = np.random.default_rng(9)
    box = build_box(24)
    lam = -0.3
    checked = 0
    for _ in range(60):
        f = sample_dgff(box, rng)
        res = minimal_closed_contour(f, lam, 0.25, 0.75)
        if not res.found:
            continue
        checked += 1
        pinned = {v: f.value(v) for v in res.enclosed}
        g = sample_conditional_dgff(box, pinned, rng)
        res2 = minimal_closed_contour(g, lam, 0.25, 0.75)
        assert res2.found
        assert res2.contour == res.contour
    assert checked >= 5


def test_crossing_monotone_in_level():
    rng = np.random.default_rng(11)
    box = build_box(24)
    for _ in range(40):
        f = sample_dgff(box, rng)
        flags = [has_crossing(level_set(f, lam), 0.25, 0.75)
                 for lam in (-0.5, 0.0, 0.5, 1.0)]
        assert flags == sorted(flags)
