import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _fixtures import brute_force_fixtures, column, everything, segment
from ringmod.chordal import ChordalParams, chordal_diameter
from ringmod.modulus import (
    INFINITE,
    Condenser,
    Density,
    PathFamily,
    PreconditionError,
    SolverError,
    admissibility_check,
    brute_force_modulus,
    capacity_floor_check,
    compute_p_modulus,
    condenser_capacity,
    conductance_oracle,
    inner_boundary,
    minorization_test,
    path_length,
    pr2_floor,
    ring_family,
)
from ringmod.space import DiscreteSpace, RingSpec, closed_ball, disk_domain, graph_space, lattice_box, table_space

P3 = graph_space(3, [(0, 1), (1, 2)])


# --------------------------------------------------------------------------- path length and admissibility


def test_path_length_examples():
    assert path_length((0, 1, 2), np.zeros(3), P3) == 0.0
    assert path_length((1,), np.array([5.0, 7.0, 9.0]), P3) == 0.0
    assert path_length((0, 1, 2), Density([1 / 3, 2 / 3, 1 / 3]), P3) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        path_length((0, 2), np.ones(3), P3)


def test_density_validation():
    with pytest.raises(ValueError):
        Density([1.0, -0.1])
    with pytest.raises(ValueError):
        Density([1.0, np.nan])


def test_admissibility_examples():
    ok, path, length = admissibility_check(np.zeros(3), PathFamily.explicit([]), P3)
    assert ok and path is None and length is INFINITE
    ok, path, length = admissibility_check(np.full(3, 100.0), PathFamily.explicit([(1,)]), P3)
    assert not ok and path == (1,) and length == 0.0
    g = lattice_box(5)
    fam = PathFamily.connecting(column(g, 0.0), column(g, 4.0), everything(g))
    diam = 4 * math.sqrt(2)
    ok, path, length = admissibility_check(np.full(g.n_nodes, 1 / diam), fam, g)
    assert not ok
    assert length == pytest.approx(4 / diam)
    assert len(path) == 5 and path_length(path, np.full(g.n_nodes, 1 / diam), g) == pytest.approx(length)


# --------------------------------------------------------------------------- solver


def test_three_node_closed_form():
    res = compute_p_modulus(P3, PathFamily.explicit([(0, 1, 2)]), 2.0)
    assert res.value == pytest.approx(2 / 3, abs=1e-6)
    np.testing.assert_allclose(res.optimal_density.rho, [1 / 3, 2 / 3, 1 / 3], atol=1e-6)
    assert res.lower_bound <= res.value <= res.upper_bound


def test_empty_and_degenerate_families():
    assert compute_p_modulus(P3, PathFamily.explicit([]), 2.0).value == 0.0
    res = compute_p_modulus(P3, PathFamily.explicit([(0, 1, 2), (1,)]), 2.0)
    assert res.value is INFINITE and res.is_infinite
    assert compute_p_modulus(P3, PathFamily.connecting({0, 1}, {1, 2}, {0, 1, 2}), 2.0).is_infinite


def test_p_restrictions():
    fam = PathFamily.explicit([(0, 1, 2)])
    for p in (1.0, 0.5, math.inf):
        with pytest.raises(ValueError):
            compute_p_modulus(P3, fam, p)
    with pytest.raises(ValueError):
        brute_force_modulus(P3, fam, 1.0)


def test_unreachable_targets_give_zero():
    g = lattice_box(4)
    fam = PathFamily.connecting({0}, {15}, {0, 15})
    assert compute_p_modulus(g, fam, 2.0).value == 0.0


def test_iteration_cap_raises_with_bounds():
    g = lattice_box(6)
    fam = PathFamily.connecting(column(g, 0.0), column(g, 5.0), everything(g))
    with pytest.raises(SolverError) as info:
        compute_p_modulus(g, fam, 2.0, max_rounds=1, paths_per_round=1, method="paths")
    lo, hi = info.value.bounds
    assert lo is not None and lo >= 0


@pytest.mark.parametrize("name,space,family,p", brute_force_fixtures(), ids=[f[0] for f in brute_force_fixtures()])
def test_agrees_with_brute_force(name, space, family, p):
    tol = 1e-6
    fast = compute_p_modulus(space, family, p, tol)
    slow = brute_force_modulus(space, family, p, tol)
    assert abs(fast.value - slow.value) <= 2 * tol
    # certified interval brackets the oracle value
    assert fast.lower_bound - 2 * tol <= slow.value <= fast.upper_bound + 2 * tol


def test_brute_force_examples():
    one = brute_force_modulus(P3, PathFamily.explicit([(0, 1, 2)]), 2.0)
    assert one.value == pytest.approx(2 / 3, abs=1e-8)
    g6 = graph_space(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])  # bridge (2, 3) unused by the family
    two = brute_force_modulus(g6, PathFamily.explicit([(0, 1, 2), (3, 4, 5)]), 2.0)
    assert two.value == pytest.approx(2 * one.value, abs=1e-8)
    mu2 = 1e-3
    gc = graph_space(5, [(0, 2), (1, 2), (2, 3), (2, 4)], measure=[1, 1, mu2, 1, 1])
    cut = brute_force_modulus(gc, PathFamily.connecting({0, 1}, {3, 4}, everything(gc)), 2.0)
    # symmetric density (s, s, t, s, s) with s + t = 1: minimize 4 s^2 + mu2 t^2
    assert cut.value == pytest.approx(mu2 / (1 + mu2 / 4), rel=1e-8)
    with pytest.raises(PreconditionError):
        brute_force_modulus(lattice_box(7), PathFamily.connecting({0}, {48}, range(49)), 2.0)


def test_potential_and_path_routes_agree():
    g = disk_domain(2.25, 0.25, stencil=8)
    fam = ring_family(g, RingSpec((0.0, 0.0), 0.75, 2.0))
    a = compute_p_modulus(g, fam, 2.0, method="paths")
    b = compute_p_modulus(g, fam, 2.0, method="potential")
    assert abs(a.value - b.value) <= 2e-6 * max(1.0, a.value)
    c = compute_p_modulus(g, fam, 3.0, method="paths")
    d = compute_p_modulus(g, fam, 3.0, method="potential")
    assert abs(c.value - d.value) <= 2e-6 * max(1.0, c.value)
    with pytest.raises(ValueError):
        compute_p_modulus(P3, PathFamily.explicit([(0, 1, 2)]), 2.0, method="potential")


def test_returned_density_is_admissible_and_energy_matches():
    for name, space, family, p in brute_force_fixtures():
        res = compute_p_modulus(space, family, p)
        if res.is_infinite or res.value == 0:
            continue
        ok, _, length = admissibility_check(res.optimal_density, family, space)
        assert ok, name
        assert res.optimal_density.energy(space, p) == pytest.approx(res.value, rel=1e-12)


def test_records(tmp_path):
    res = compute_p_modulus(P3, PathFamily.explicit([(0, 1, 2)]), 2.0)
    path = tmp_path / "m.jsonl"
    res.write_records(path)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert recs[0]["kind"] == "modulus" and recs[0]["value"] == pytest.approx(2 / 3, abs=1e-6)
    assert [r["node"] for r in recs[1:]] == [0, 1, 2]
    inf = compute_p_modulus(P3, PathFamily.explicit([(1,)]), 2.0).records()[0]
    assert inf["value"] == "+inf"


# --------------------------------------------------------------------------- oracle


def test_conductance_examples():
    two = table_space([[0, 1, 3, 4], [1, 0, 2, 3], [3, 2, 0, 1], [4, 3, 1, 0]], edges=[(0, 1), (2, 3)])
    assert conductance_oracle(two, {0}, {3}) == 0.0
    assert conductance_oracle(graph_space(2, [(0, 1)]), {0}, {1}) == pytest.approx(1.0)
    assert conductance_oracle(P3, {0}, {2}) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        conductance_oracle(P3, {0}, {0})


# --------------------------------------------------------------------------- monotonicity


def test_minorization_examples():
    g = lattice_box(4)
    fam = PathFamily.explicit([(0, 1, 2, 3), (0, 4, 5, 6, 7)])
    rep = minorization_test(g, fam, fam, 2.0)
    assert rep.holds and abs(rep.m1.value - rep.m2.value) <= 2e-6
    longer = PathFamily.explicit([(0, 1, 2, 3), (0, 4, 5, 6, 7), (0, 1, 5, 9)])
    sub = PathFamily.explicit([(0, 1, 2, 3), (4, 5, 6), (1, 5)])
    assert minorization_test(g, longer, sub, 2.0).holds
    extra = PathFamily.explicit([(0, 1, 2, 3), (0, 4, 5, 6, 7), (9, 10)])
    assert minorization_test(g, fam, extra, 2.0).holds
    with pytest.raises(PreconditionError):
        minorization_test(g, PathFamily.explicit([(0, 1, 2)]), PathFamily.explicit([(5, 6)]), 2.0)


def test_minorization_annulus_restriction():
    g = disk_domain(3.5, 0.25, stencil=8)
    wide = ring_family(g, RingSpec((0.0, 0.0), 1.0, 3.0))
    narrow = ring_family(g, RingSpec((0.0, 0.0), 1.0, 2.0))
    with pytest.raises(PreconditionError):
        minorization_test(g, wide, narrow, 2.0)
    rep = minorization_test(g, wide, narrow, 2.0, by_construction=True)
    assert rep.holds and rep.m1.value < rep.m2.value


paths_4x4 = st.lists(
    st.sampled_from([(0, 1, 2, 3), (0, 4, 8, 12), (3, 7, 11, 15), (12, 13, 14, 15), (1, 5, 9, 13), (4, 5, 6, 7), (5, 6, 10), (0, 1, 5, 6, 2)]),
    min_size=1,
    max_size=5,
    unique=True,
)


@settings(max_examples=25)
@given(paths_4x4, paths_4x4, st.sampled_from([1.5, 2.0, 3.0]))
def test_subadditivity_and_subfamily(f1, f2, p):
    g = lattice_box(4)
    a, b = PathFamily.explicit(f1), PathFamily.explicit(f2)
    ma = compute_p_modulus(g, a, p).value
    mb = compute_p_modulus(g, b, p).value
    mu = compute_p_modulus(g, a.union(b), p).value
    assert mu <= ma + mb + 2e-6
    assert ma <= mu + 2e-6 and mb <= mu + 2e-6


@settings(max_examples=20)
@given(st.floats(0.1, 10.0), st.sampled_from([1.5, 2.0, 2.5]))
def test_measure_scaling(c, p):
    g = lattice_box(4)
    scaled = DiscreteSpace(edges=g.edges, edge_length=g.edge_length, measure=g.measure * c, coords=g.coords, conductance=g.conductance)
    fam = PathFamily.connecting(column(g, 0.0), column(g, 3.0), everything(g))
    m = compute_p_modulus(g, fam, p, tol=1e-9).value
    assert compute_p_modulus(scaled, fam, p, tol=1e-9).value == pytest.approx(c * m, rel=1e-6)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_random_graphs_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 8))
    edges = {(i, i + 1) for i in range(n - 1)}
    for _ in range(n):
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((u, v))
    edges = sorted(edges)
    g = graph_space(n, edges, rng.uniform(0.5, 2.0, len(edges)), rng.uniform(0.5, 2.0, n))
    fam = PathFamily.connecting({0}, {n - 1}, range(n))
    p = float(rng.choice([1.2, 1.5, 2.0, 3.0, 5.0]))
    assert compute_p_modulus(g, fam, p).value == pytest.approx(brute_force_modulus(g, fam, p).value, abs=2e-6)


# --------------------------------------------------------------------------- capacity


def test_condenser_examples():
    g = disk_domain(2.5, 0.125, stencil=8)
    whole = Condenser(everything(g), closed_ball(g, (0.0, 0.0), 0.5))
    assert condenser_capacity(g, whole).value == 0.0
    A = frozenset(np.flatnonzero(g.distances_from((0.0, 0.0)) < 2.0).tolist())
    C = closed_ball(g, (0.0, 0.0), 0.5)
    cap = condenser_capacity(g, Condenser(A, C)).value
    oracle = conductance_oracle(g, C, inner_boundary(g, A), A)
    assert cap == pytest.approx(oracle, rel=0.05)
    # the shell sits one step inside |x| = 2
    assert cap == pytest.approx(2 * math.pi / math.log(1.875 / 0.5), rel=0.15)


def test_condenser_plate_next_to_shell():
    g = lattice_box(5)
    A = everything(g) - {0}
    # node 6 = (1, 1) neighbours the shell nodes 1 and 5 but not node 0
    cap = condenser_capacity(g, Condenser(A, frozenset({6})))
    assert not cap.is_infinite
    # one unit edge to the shell: (rho_6 + rho_1)/2 >= 1 forces rho_6^2 + rho_1^2 >= 2
    assert cap.value >= 2.0
    assert condenser_capacity(g, Condenser(A, frozenset({12}))).value < cap.value
    with pytest.raises(PreconditionError):
        Condenser(frozenset({1, 2}), frozenset({3}))
    with pytest.raises(PreconditionError):
        Condenser(frozenset({1, 2}), frozenset())


def test_condenser_plate_on_shell_is_infinite():
    g = lattice_box(5)
    A = everything(g) - {0}
    assert condenser_capacity(g, Condenser(A, frozenset({1}))).is_infinite
    assert condenser_capacity(g, Condenser(A - {7}, frozenset({6}))).is_infinite


def test_pr2_floor_preconditions():
    g = lattice_box(9, step=0.5)
    E = segment(g, (1.0, 1.0), (1.0, 2.0))
    F = segment(g, (3.0, 1.0), (3.0, 2.0))
    with pytest.raises(PreconditionError):
        pr2_floor(g, E, E, 2.0, 2.0)
    with pytest.raises(PreconditionError):
        pr2_floor(g, E - {g.nearest_node((1.0, 1.5))}, F, 2.0, 2.0)
    with pytest.raises(PreconditionError):
        pr2_floor(g, E, F, 2.0, 2.5)
    with pytest.raises(PreconditionError):
        pr2_floor(g, E, F, 1.0, 2.0, center=(2.0, 1.5))
    rep = pr2_floor(g, E, F, 2.0, 2.0, center=(2.0, 1.5))
    assert rep.observed > 0 and rep.bound == pytest.approx(1.0 / 2.0)
    assert rep.ratio == pytest.approx(rep.bound / rep.observed)


def test_pr2_floor_halving_F():
    g = lattice_box(17, step=0.25)
    E = segment(g, (1.5, 1.5), (1.5, 2.5))
    full = pr2_floor(g, E, segment(g, (2.5, 1.5), (2.5, 2.5)), 1.0, 2.0, center=(2.0, 2.0))
    half = pr2_floor(g, E, segment(g, (2.5, 1.75), (2.5, 2.25)), 1.0, 2.0, center=(2.0, 2.0))
    assert half.bound == pytest.approx(full.bound / 2)
    # drops by at most about half, plus mesh error
    assert 0.45 * full.observed <= half.observed < full.observed


def test_capacity_floor_examples():
    g = lattice_box(13, step=0.25)
    c = (1.5, 1.5)
    prm = ChordalParams(g.nearest_node(c))
    F = segment(g, (1.5, 1.0), (1.5, 2.0))
    far = segment(g, (2.25, 0.25), (2.75, 0.25))
    small = segment(g, (0.25, 2.75), (0.5, 2.75))
    a = chordal_diameter(far, prm, g).value
    assert chordal_diameter(small, prm, g).value < a
    rep = capacity_floor_check(g, F, prm, a, 2.0, [far, small, far | {g.nearest_node(c)}, far - {g.nearest_node((2.5, 0.25))}])
    assert rep.all_positive and len(rep.capacities) == 1
    assert rep.delta == rep.capacities[0] > 0
    assert [k for k, _ in rep.skipped] == [1, 2, 3]
    assert "below a" in rep.skipped[0][1]
