"""Box geometry, concentric sub-boxes and metric graph meshes."""

import pytest

from gfflab.errors import InvalidSizeError, MeshTooCoarseError, RangeError
from gfflab.lattice import (
    BoxSpec,
    build_box,
    build_metric_graph,
    inner_box,
    inner_boundary,
    inner_box_spec,
    lattice_edges,
)


def test_box_counts_small():
    box = build_box(3)
    assert len(box.vertices) == 9
    assert len(box.boundary) == 8
    assert len(box.interior) == 1

    box = build_box(4)
    assert len(box.vertices) == 16
    assert len(box.boundary) == 12
    assert len(box.interior) == 4


def test_boundary_count_matches_enumeration():
    # oracle: count vertices with at least one neighbor outside, directly
    box = build_box(64)
    direct = {v for v in box.vertices
              if any(not box.contains(w) for w in
                     ((v[0] + 1, v[1]), (v[0] - 1, v[1]),
                      (v[0], v[1] + 1), (v[0], v[1] - 1)))}
    assert len(direct) == 4 * 64 - 4 == 252
    assert box.boundary == frozenset(direct)


def test_too_small_box_rejected():
    with pytest.raises(InvalidSizeError):
        build_box(2)


def test_inner_box_floor_convention():
    box = build_box(9)
    assert len(inner_box(box, 3.7)) == 9
    assert inner_box(box, 9) == box.vertices


def test_inner_box_quarter_of_64():
    box = build_box(64)
    assert len(inner_box(box, 0.25 * 64)) == 256


def test_inner_box_range_checks():
    box = build_box(9)
    with pytest.raises(RangeError):
        inner_box(box, 0.5)
    with pytest.raises(RangeError):
        inner_box(box, 10)


def test_inner_boundary_contained():
    box = build_box(17)
    sub = inner_box(box, 0.25 * 17)
    assert inner_boundary(box, 0.25 * 17) <= sub


def test_every_escape_path_crosses_inner_ring():
    # BFS from the inner box with the ring removed never reaches the
    # outer boundary
    box = build_box(13)
    ring = inner_boundary(box, 5)
    inner = inner_box(box, 5) - ring
    allowed = box.vertices - ring
    seen = set(inner)
    frontier = list(inner)
    while frontier:
        nxt = []
        for v in frontier:
            for w in box.neighbors(v):
                if w in allowed and w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    assert not (seen & box.boundary)


def test_star_neighborhood_size():
    box = build_box(9)
    for v in box.interior:
        assert len(list(box.star_neighbors(v))) == 8


def test_star_adjacency_is_linf_one():
    box = build_box(7)
    v = (0, 0)
    for w in box.star_neighbors(v):
        assert max(abs(w[0] - v[0]), abs(w[1] - v[1])) == 1


def test_centering_parity():
    assert (0, 0) in build_box(9).vertices
    even = build_box(8)
    # even boxes straddle the half-integer center: no vertex at the origin
    # of symmetry, but the box is symmetric under v -> (1,1) - v
    assert all((1 - v[0], 1 - v[1]) in even.vertices for v in even.vertices)


def test_single_edge_mesh_points():
    box = build_box(5)
    spec = build_metric_graph(box, "single", 8)
    fam = spec.edge_families[0]
    assert fam.length == pytest.approx(0.5)
    assert fam.n_interior == 4


def test_two_edge_family_lengths():
    box = build_box(5)
    spec = build_metric_graph(box, "two-edge", 2)
    lengths = {round(f.length, 6) for f in spec.edge_families}
    assert lengths == {4.0, round(4 / 7, 6)}
    e1 = next(f for f in spec.edge_families if f.length == 4.0)
    assert e1.n_interior == 8
    # parallel conductances are a unit split and every family keeps
    # conductance * length at one half
    assert sum(f.conductance for f in spec.edge_families) == pytest.approx(1.0)
    for f in spec.edge_families:
        assert f.conductance * f.length == pytest.approx(0.5)


def test_mesh_density_floor():
    box = build_box(5)
    with pytest.raises(MeshTooCoarseError):
        build_metric_graph(box, "single", 1)


def test_center_degree_n3():
    box = build_box(3)
    spec = build_metric_graph(box, "single", 4)
    incident = [e for e in spec.edges if (0, 0) in e]
    assert len(incident) == 4


def test_lattice_edge_count():
    box = build_box(4)
    assert len(lattice_edges(box)) == 2 * 4 * 3


def test_inner_box_spec_is_boxspec():
    box = build_box(9)
    sub = inner_box_spec(box, 5)
    assert isinstance(sub, BoxSpec)
    assert sub.n == 5
    assert sub.vertices <= box.vertices
