import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringmod.chordal import ptolemy_check
from ringmod.space import (
    BuildError,
    DomainSpec,
    Region,
    RingSpec,
    ahlfors_probe,
    build_grid_domain,
    closed_ball,
    disk_domain,
    graph_space,
    lattice_box,
    log_polar_domain,
    read_space_records,
    ring_shells,
    ring_subset,
    sphere_nodes,
    table_space,
)

ORIGIN = (0.0, 0.0)


def test_unit_square():
    g = build_grid_domain(DomainSpec((0.0, 0.0), (1.0, 1.0), 0.5))
    assert g.n_nodes == 9
    assert g.n_edges == 12
    assert np.all(g.measure == 0.25)
    assert np.all(g.edge_length == 0.5)


def test_punctured_disk_matches_lattice_count():
    g = build_grid_domain(DomainSpec((-1.0, -1.0), (1.0, 1.0), 0.5, shape=Region("disk", center=ORIGIN, radius=1.0), puncture=ORIGIN))
    want = sum(1 for i in range(-2, 3) for j in range(-2, 3) if 0 < i * i + j * j <= 4)
    assert g.n_nodes == want == 12
    assert np.all(np.linalg.norm(g.coords, axis=1) > 0)


def test_degenerate_box_rejected():
    with pytest.raises(BuildError):
        build_grid_domain(DomainSpec((0.0, 0.0), (0.0, 1.0), 0.5))
    with pytest.raises(BuildError):
        build_grid_domain(DomainSpec((0.0, 0.0), (1.0, 1.0), 0.0))
    with pytest.raises(BuildError):
        build_grid_domain(DomainSpec((0.0, 0.0), (1.0, 1.0), 0.5, shape=Region("disk", center=(5.0, 5.0), radius=0.1)))


def test_three_dimensional_box():
    g = lattice_box(3, dim=3)
    assert g.n_nodes == 27
    assert g.n_edges == 3 * 9 * 2
    assert g.dimension_alpha == 3.0


@pytest.mark.parametrize("stencil,degree", [(4, 4), (8, 8), (16, 16)])
def test_stencil_interior_degree(stencil, degree):
    g = lattice_box(7, stencil=stencil)
    deg = np.bincount(g.edges.ravel(), minlength=g.n_nodes)
    assert deg[g.nearest_node((3.0, 3.0))] == degree


def test_edge_lengths_equal_coordinate_distance():
    g = disk_domain(2.0, 0.25, stencil=16)
    d = np.linalg.norm(g.coords[g.edges[:, 0]] - g.coords[g.edges[:, 1]], axis=1)
    np.testing.assert_allclose(g.edge_length, d, rtol=1e-14)


def test_disk_domain_is_centred():
    g = disk_domain(1.0, 0.3, center=(0.1, -0.2), puncture=True)
    d = np.linalg.norm(g.coords - [0.1, -0.2], axis=1)
    assert d.min() == pytest.approx(0.3)
    assert np.sum(np.isclose(d, 0.3)) == 4


def test_graph_space_errors_and_metric():
    with pytest.raises(BuildError):
        graph_space(4, [(0, 1), (2, 3)])
    with pytest.raises(BuildError):
        graph_space(2, [(0, 0)])
    g = graph_space(4, [(0, 1), (1, 2), (2, 3)], lengths=[1.0, 2.0, 3.0])
    assert g.distance(0, 3) == 6.0
    with pytest.raises(BuildError):
        table_space([[0, 1], [2, 0]])


# --------------------------------------------------------------------------- rings and spheres


def test_ring_subset_examples():
    g = lattice_box(9)
    c = (4.0, 4.0)
    assert ring_subset(g, RingSpec(c, 10.0, 11.0)) == frozenset()
    A = ring_subset(g, RingSpec(c, 0.9, 2.1))
    d = g.distances_from(c)
    assert {v for v in range(g.n_nodes) if d[v] in (1.0, 2.0)} <= A
    assert g.nearest_node(c) not in A
    assert not any(d[v] == 3.0 for v in A)
    assert A == {v for v in range(g.n_nodes) if 0.9 < d[v] < 2.1}
    assert ring_subset(g, RingSpec(c, 1.0, 2.0)) <= ring_subset(g, RingSpec(c, 0.5, 3.0))


def test_ring_spec_validation():
    for r1, r2 in [(0.0, 1.0), (2.0, 1.0), (1.0, math.inf)]:
        with pytest.raises(ValueError):
            RingSpec(ORIGIN, r1, r2)


def test_sphere_examples():
    g = lattice_box(9)
    c = (4.0, 4.0)
    assert sphere_nodes(g, c, 0.0, 0.5) == {g.nearest_node(c)}
    # |sqrt2 - 1| < 1/2, so the half-step shell holds the 8 king-move neighbours
    d = g.distances_from(c)
    shell = sphere_nodes(g, c, 1.0, 0.5)
    assert shell == {v for v in range(g.n_nodes) if abs(d[v] - 1.0) <= 0.5}
    assert shell == set(lattice_box(9, stencil=8).neighbors(g.nearest_node(c)).tolist())
    assert sphere_nodes(g, c, 1.0, 0.25) == set(g.neighbors(g.nearest_node(c)).tolist())
    with pytest.warns(UserWarning, match="empty"):
        assert sphere_nodes(g, c, 1.2, 0.1) == frozenset()
    with pytest.warns(UserWarning, match="overlap"):
        ring_shells(g, RingSpec(c, 1.0, 1.5), tol=1.0)


def test_ring_shells_sit_outside_the_ring():
    g = disk_domain(3.0, 0.25, stencil=16)
    ring = RingSpec(ORIGIN, 1.0, 2.0)
    s1, s2 = ring_shells(g, ring)
    d = g.distances_from(ORIGIN)
    assert all(d[v] <= 1.0 + 1e-12 for v in s1)
    assert all(d[v] >= 2.0 - 1e-12 for v in s2)
    # every edge leaving the open ring ends in a shell
    A = ring_subset(g, ring)
    for u, v in g.edges:
        if (u in A) != (v in A):
            out = v if u in A else u
            assert out in s1 | s2


@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_ring_monotone_and_partition(r1, w, dr1, dr2):
    g = lattice_box(9, step=0.5)
    c = (2.0, 2.0)
    r2 = r1 + w
    A = ring_subset(g, RingSpec(c, r1, r2))
    bigger = ring_subset(g, RingSpec(c, max(r1 - dr1, 1e-3), r2 + dr2))
    assert A <= bigger
    d = g.distances_from(c)
    inner = closed_ball(g, c, r1) - {v for v in range(g.n_nodes) if d[v] == r1}
    outer = {v for v in range(g.n_nodes) if d[v] > r2}
    spheres = {v for v in range(g.n_nodes) if d[v] in (r1, r2)}
    parts = [A, inner, outer]
    assert sum(len(p) for p in parts) + len(spheres) == g.n_nodes
    assert set().union(*parts) | spheres == set(range(g.n_nodes))


def test_grid_is_ptolemaic():
    g = lattice_box(6, step=0.3)
    rng = np.random.default_rng(0)
    q = [tuple(int(x) for x in row) for row in rng.integers(0, g.n_nodes, size=(20000, 4))]
    assert ptolemy_check(g, q).min_slack >= -1e-12


# --------------------------------------------------------------------------- regularity


def test_ahlfors_examples():
    g = disk_domain(8.0, 0.05)
    rep = ahlfors_probe(g, ORIGIN, [0.5, 1.0, 2.0, 4.0], 2.0)
    assert np.all((rep.ratios >= 0.8 * math.pi) & (rep.ratios <= 1.2 * math.pi))
    assert rep.constant >= 1.0
    np.testing.assert_allclose(rep.doubling_ratios[:3], 4.0, rtol=0.02)
    tiny = ahlfors_probe(g, ORIGIN, [0.01], 2.0)
    assert tiny.ball_measure[0] == pytest.approx(0.05**2)
    assert tiny.ratios[0] == pytest.approx(0.05**2 / 0.01**2)


def test_ahlfors_bounded_across_a_decade():
    g = disk_domain(6.0, 0.1)
    rep = ahlfors_probe(g, ORIGIN, np.geomspace(0.3, 3.0, 8), 2.0)
    assert rep.min_ratio > 2.0 and rep.max_ratio < 4.5


# --------------------------------------------------------------------------- serialization and log-polar lattices


def test_records_roundtrip(tmp_path):
    for g in (disk_domain(1.0, 0.25, stencil=8), graph_space(3, [(0, 1), (1, 2)], lengths=[0.5, 2.0])):
        path = tmp_path / "space.jsonl"
        from ringmod.space import write_space_records

        write_space_records(g, path)
        h = read_space_records(path)
        assert h.n_nodes == g.n_nodes and h.n_edges == g.n_edges
        np.testing.assert_array_equal(h.edges, g.edges)
        np.testing.assert_array_equal(h.conductance, g.conductance)
        np.testing.assert_array_equal(h.pairwise(range(3), range(3)), g.pairwise(range(3), range(3)))


def test_log_polar_lattice():
    n = 32
    g = log_polar_domain(0.01, 1.0, n)
    delta = 2 * math.pi / n
    r = np.linalg.norm(g.coords, axis=1)
    rings = np.unique(np.round(np.log(r / 0.01) / delta, 9))
    np.testing.assert_allclose(rings, np.arange(len(rings)))
    assert r.max() >= 1.0
    np.testing.assert_allclose(g.measure, r**2 * delta**2, rtol=1e-12)
    # periodic in angle: every node on an inner layer has the full stencil
    deg = np.bincount(g.edges.ravel(), minlength=g.n_nodes)
    mid = (len(rings) // 2) * n
    assert np.all(deg[mid:mid + n] == 16)
    with pytest.raises(BuildError):
        log_polar_domain(1.0, 0.5, n)


def test_coordinate_and_table_distances_agree():
    g = lattice_box(3, step=0.5)
    D = g.pairwise(range(9), range(9))
    t = table_space(D)
    np.testing.assert_array_equal(t.pairwise(range(9), range(9)), D)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert t.distance(0, 8) == pytest.approx(math.sqrt(2))
