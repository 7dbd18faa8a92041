import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringmod.chordal import (
    INFINITY,
    ChordalParams,
    PreconditionError,
    all_quadruples,
    all_triples,
    chordal_diameter,
    chordal_matrix,
    chordal_distance,
    chordal_plane,
    extract_subcontinuum,
    metric_equivalence_ratio,
    net_probe,
    ptolemy_check,
    sphere_embedding,
    tail_diameter,
    triangle_audit,
)
from ringmod.space import DiscreteSpace, cycle_graph, lattice_box

PARAMS = [(1.0, 1.0, 2.0), (2.0, 0.5, 1.0), (0.5, 3.0, 3.0), (1.0, 0.0, 1.5), (3.0, 2.0, 1.0)]


def cloud(points):
    pts = np.asarray(points, dtype=float)
    return DiscreteSpace(edges=np.zeros((0, 2), dtype=np.int64), edge_length=np.zeros(0), measure=np.ones(len(pts)), coords=pts)


def oracle_H(coords, x0, alpha, beta, p):
    """Direct formula on coordinates, independent of the library's matrix code."""
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff**2).sum(-1))
    d0 = np.sqrt(((coords - coords[x0]) ** 2).sum(-1))
    w = (alpha + beta * d0**p) ** (1 / p)
    return d / w[:, None] / w[None, :]


# --------------------------------------------------------------------------- distance


def test_distance_examples():
    g = lattice_box(3)
    prm = ChordalParams(0)
    assert chordal_distance(0, 1, prm, g) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert chordal_distance(4, 4, prm, g) == 0.0
    assert chordal_distance(0, INFINITY, prm, g) == 1.0
    assert chordal_distance(INFINITY, INFINITY, prm, g) == 0.0
    assert chordal_distance(8, INFINITY, prm, g) == pytest.approx(1 / math.sqrt(1 + 8))


def test_infinity_rejected_for_general_params():
    with pytest.raises(ValueError):
        chordal_distance(0, INFINITY, ChordalParams(0, 2.0, 1.0, 2.0), lattice_box(2))


def test_unknown_node_rejected():
    with pytest.raises(ValueError):
        chordal_distance(0, 99, ChordalParams(0), lattice_box(2))


def test_params_validation():
    for bad in [dict(alpha=0.0), dict(beta=-1.0), dict(p=0.5)]:
        with pytest.raises(ValueError):
            ChordalParams(0, **bad)


@pytest.mark.parametrize("alpha,beta,p", PARAMS)
def test_matrix_matches_direct_formula(alpha, beta, p):
    g = lattice_box(4, step=0.7)
    pts = list(range(g.n_nodes))
    prm = ChordalParams(5, alpha, beta, p)
    np.testing.assert_allclose(chordal_matrix(pts, pts, prm, g), oracle_H(g.coords, 5, alpha, beta, p), rtol=1e-14, atol=1e-16)


# --------------------------------------------------------------------------- audits


def test_degenerate_triple_has_zero_defect():
    rep = triangle_audit(ChordalParams(0), lattice_box(3), [(4, 4, 4)])
    assert rep.max_defect == 0.0


@pytest.mark.parametrize("alpha,beta,p", PARAMS)
def test_exhaustive_triangle_audit_on_5x5_grid(alpha, beta, p):
    g = lattice_box(5)
    pts = list(range(g.n_nodes))
    rep = triangle_audit(ChordalParams(12, alpha, beta, p), g, all_triples(pts))
    assert rep.n_triples == 25**3
    assert rep.passed(1e-12)
    # independent recomputation of the worst defect
    H = oracle_H(g.coords, 12, alpha, beta, p)
    defect = H[:, None, :] - H[:, :, None] - H[None, :, :]  # [x, y, z]
    assert rep.max_defect == pytest.approx(float(defect.max()), abs=1e-15)


def test_non_ptolemaic_witness_has_triangle_defect():
    c4 = cycle_graph(4)
    rep = triangle_audit(ChordalParams(0), c4, all_triples(range(4)))
    # H(1,3) = 2/(sqrt2 sqrt2) = 1, H(1,2) = H(2,3) = 1/sqrt(10)
    assert rep.max_defect == pytest.approx(1 - 2 / math.sqrt(10), abs=1e-15)
    assert rep.worst_triple == (1, 2, 3)
    assert not rep.passed()


def test_empty_triples_rejected():
    with pytest.raises(ValueError):
        triangle_audit(ChordalParams(0), lattice_box(2), [])


def test_ptolemy_examples():
    g = lattice_box(4)
    assert ptolemy_check(g, [(0, 0, 5, 7)]).min_slack >= 0
    assert ptolemy_check(g, [(1, 2, 1, 2)]).min_slack >= 0
    rep = ptolemy_check(g, all_quadruples(range(16)))
    assert rep.n_quadruples == 16**4
    assert rep.min_slack >= -1e-12
    c4 = cycle_graph(4)
    rep = ptolemy_check(c4, all_quadruples(range(4)))
    assert rep.min_slack == -2.0
    assert ptolemy_check(c4, [(0, 2, 1, 3)]).min_slack == 1 * 1 + 1 * 1 - 2 * 2


# --------------------------------------------------------------------------- diameter


def test_diameter_examples():
    g = lattice_box(3)
    prm = ChordalParams(0)
    assert chordal_diameter([4], prm, g).value == 0.0
    assert chordal_diameter([4], prm, g).witness_pair == (4, 4)
    assert chordal_diameter([0, 1], prm, g).value == pytest.approx(1 / math.sqrt(2))
    whole = chordal_diameter(list(range(9)) + [INFINITY], prm, g)
    assert whole.value <= 1.0
    assert whole.witness_pair == (0, INFINITY)
    with pytest.raises(ValueError):
        chordal_diameter([], prm, g)


def test_diameter_tie_break_is_lexicographic():
    # on a line 0-1-2 with basepoint 1, pairs (0,1) and (1,2) tie; (0,2) is largest
    g = cloud([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    res = chordal_diameter([2, 1], ChordalParams(1), g)
    assert res.witness_pair == (1, 2)
    res = chordal_diameter([2, 1, 0], ChordalParams(1), g)
    assert res.witness_pair == (0, 2)


def test_diameter_witness_attains_value():
    g = lattice_box(5, step=0.4)
    prm = ChordalParams(7)
    pts = [0, 3, 9, 17, 24, INFINITY]
    res = chordal_diameter(pts, prm, g)
    assert chordal_distance(*res.witness_pair, prm, g) == res.value


# --------------------------------------------------------------------------- subcontinuum


def test_subcontinuum_inside_ball_is_returned():
    g = lattice_box(9, step=0.5)
    x0 = g.nearest_node((2.0, 2.0))
    C = frozenset(g.nearest_node((2.0 + 0.5 * k, 2.0)) for k in range(3))
    a = chordal_diameter(C, ChordalParams(x0), g).value
    assert extract_subcontinuum(C, x0, a, 100.0, g) == C


def _straddle():
    g = lattice_box(41, step=0.5)
    x0 = g.nearest_node((10.0, 10.0))
    C = frozenset(g.nearest_node((10.0 + 0.5 * k, 10.0)) for k in range(0, 40))
    return g, x0, C


def test_subcontinuum_straddling_matches_enumeration():
    g, x0, C = _straddle()
    prm = ChordalParams(x0)
    a = chordal_diameter(C, prm, g).value
    # the tail beyond R must have diameter < a/2
    R = 9.0
    assert tail_diameter(g, prm, R, include_infinity=False) < a / 2
    C1 = extract_subcontinuum(C, x0, a, R, g)
    d0 = g.distances_from(x0)
    inside = [v for v in C if d0[v] <= R]
    best = max(chordal_diameter(c, prm, g).value for c in g.induced_components(inside))
    assert chordal_diameter(C1, prm, g).value == best
    assert best >= a / 4
    assert g.is_connected(C1)
    assert all(d0[v] <= R for v in C1)


def test_subcontinuum_preconditions():
    g, x0, C = _straddle()
    prm = ChordalParams(x0)
    a = chordal_diameter(C, prm, g).value
    with pytest.raises(PreconditionError, match="diameter of C"):
        extract_subcontinuum(C, x0, 2 * a, 100.0, g)
    with pytest.raises(PreconditionError, match="complement"):
        extract_subcontinuum(C, x0, a, 1.0, g)
    with pytest.raises(PreconditionError, match="not connected"):
        extract_subcontinuum(C - {g.nearest_node((12.0, 10.0))}, x0, a / 2, 100.0, g)


def test_subcontinuum_huge_R_returns_C():
    g, x0, C = _straddle()
    a = chordal_diameter(C, ChordalParams(x0), g).value
    assert extract_subcontinuum(C, x0, a, 1e6, g) == C


# --------------------------------------------------------------------------- equivalence and nets


def test_equivalence_examples():
    g = lattice_box(4)
    pairs = list(itertools.combinations(range(16), 2))
    prm = ChordalParams(0)
    assert metric_equivalence_ratio(prm, prm, g, pairs) == (1.0, 1.0)
    base = ChordalParams(0, 1.0, 0.0, 2.0)  # H = d
    D = float(g.pairwise(range(16), range(16)).max())
    lo, hi = metric_equivalence_ratio(prm, base, g, pairs)
    assert 1 / (1 + D**2) - 1e-15 <= lo <= hi <= 1.0
    lo, hi = metric_equivalence_ratio(ChordalParams(0, 2.0, 1.0, 2.0), prm, g, pairs)
    assert hi <= 1.0
    with pytest.raises(ValueError):
        metric_equivalence_ratio(prm, prm, g, [(3, 3)])
    with pytest.raises(ValueError):
        metric_equivalence_ratio(prm, ChordalParams(1), g, pairs)


def test_net_probe_examples():
    g = lattice_box(21, step=0.5)
    x0 = g.nearest_node((5.0, 5.0))
    prm = ChordalParams(x0)
    net = net_probe(g, prm, 0.3)
    assert INFINITY in net.points
    assert net.tail_radius == pytest.approx(math.sqrt(1 / 0.09 - 1))
    assert net.tail_radius == pytest.approx(3.18, abs=5e-3)
    assert net.covering_radius <= 0.3
    whole = chordal_diameter(list(range(g.n_nodes)) + [INFINITY], prm, g).value
    assert net_probe(g, prm, whole * 1.01).points == [x0]
    with pytest.raises(ValueError):
        net_probe(g, prm, 0.0)


def test_tail_diameter_decays():
    g = lattice_box(33)
    prm = ChordalParams(g.nearest_node((16.0, 16.0)))
    vals = [tail_diameter(g, prm, R) for R in (1, 2, 4, 8, 16)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    for R, v in zip((1, 2, 4, 8, 16), vals):
        assert v <= 2 / math.sqrt(1 + R**2) + 1e-15


# --------------------------------------------------------------------------- properties

coords = st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=3, max_size=8, unique=True)
param_sets = st.tuples(st.floats(0.1, 4), st.floats(0, 4), st.floats(1, 4))


@given(coords, param_sets)
def test_metric_axioms_on_point_clouds(pts, prm_t):
    g = cloud(pts)
    prm = ChordalParams(0, *prm_t)
    n = g.n_nodes
    rep = triangle_audit(prm, g, all_triples(range(n)))
    assert rep.max_relative_defect <= 1e-12
    H = chordal_matrix(list(range(n)), list(range(n)), prm, g)
    assert np.array_equal(H, H.T)
    off = ~np.eye(n, dtype=bool)
    assert np.all(np.diag(H) == 0)
    assert np.all(H[off] > 0) or np.any(g.pairwise(range(n), range(n))[off] == 0)


@given(coords)
def test_standard_chordal_below_base_and_extended_triangle(pts):
    g = cloud(pts)
    prm = ChordalParams(0)
    n = g.n_nodes
    full = list(range(n)) + [INFINITY]
    H = chordal_matrix(full, full, prm, g)
    D = g.pairwise(range(n), range(n))
    assert np.all(H[:n, :n] <= D * (1 + 1e-15))
    hinf = H[:n, n]
    # h(x, inf) <= h(x, y) + h(y, inf) for all finite x, y
    assert np.all(hinf[:, None] <= H[:n, :n] + hinf[None, :] + 1e-15)
    assert H.max() <= 1.0 + 1e-15


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False), st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_sphere_embedding_reproduces_chordal_formula(a, b, c):
    want = abs(a - b) / math.sqrt(1 + abs(a - c) ** 2) / math.sqrt(1 + abs(b - c) ** 2)
    assert float(chordal_plane(a, b, c)) == pytest.approx(want, rel=1e-9, abs=1e-14)
    to_inf = float(chordal_plane(a, complex(np.inf), c))
    assert to_inf == pytest.approx(1 / math.sqrt(1 + abs(a - c) ** 2), rel=1e-9, abs=1e-15)
    e = sphere_embedding(np.array([a, complex(np.inf)]), c)
    assert np.allclose(np.linalg.norm(e - [0, 0, 0.5], axis=1), 0.5)
