"""Generalized chordal metrics on a discrete space and its one-point compactification.

For a base point x0 and constants alpha > 0, beta >= 0, p >= 1,

    H(x, y) = d(x, y) / ((alpha + beta d(x, x0)^p)^(1/p) (alpha + beta d(y, x0)^p)^(1/p)).

The standard chordal metric h is the case alpha = beta = 1, p = 2; only h is
extended to the point at infinity, via h(x, inf) = 1 / sqrt(1 + d(x0, x)^2).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .space import DiscreteSpace

__all__ = [
    "INFINITY",
    "ChordalParams",
    "AuditReport",
    "PtolemyReport",
    "DiameterResult",
    "NetResult",
    "chordal_distance",
    "chordal_matrix",
    "triangle_audit",
    "ptolemy_check",
    "chordal_diameter",
    "extract_subcontinuum",
    "metric_equivalence_ratio",
    "net_probe",
    "tail_diameter",
    "all_triples",
    "all_quadruples",
    "sphere_embedding",
    "chordal_plane",
    "AUDIT_TOL",
]

AUDIT_TOL = 1e-12


class _Infinity:
    """The added point of the compactification.  Sorts after every node."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


def _is_inf(x) -> bool:
    return x is INFINITY


@dataclass(frozen=True)
class ChordalParams:
    basepoint: int
    alpha: float = 1.0
    beta: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not (self.p >= 1 and math.isfinite(self.p)):
            raise ValueError(f"p must be >= 1, got {self.p}")

    @property
    def is_standard(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0 and self.p == 2.0

    def weight(self, d0: np.ndarray) -> np.ndarray:
        """The per-point factor (alpha + beta d0^p)^(1/p)."""
        return (self.alpha + self.beta * np.asarray(d0, dtype=float) ** self.p) ** (1.0 / self.p)


def _resolve(points: Sequence, params: ChordalParams, space: DiscreteSpace) -> tuple[np.ndarray, np.ndarray]:
    """Node index array (inf replaced by 0) and a mask of infinite entries."""
    idx = np.zeros(len(points), dtype=int)
    inf = np.zeros(len(points), dtype=bool)
    for k, x in enumerate(points):
        if _is_inf(x):
            if not params.is_standard:
                raise ValueError("the point at infinity is only defined for alpha = beta = 1, p = 2")
            inf[k] = True
        else:
            idx[k] = space.check_node(x)
    return idx, inf


def chordal_matrix(a: Sequence, b: Sequence, params: ChordalParams, space: DiscreteSpace) -> np.ndarray:
    """Matrix of H(a_i, b_j).  Entries may be node ids or INFINITY."""
    x0 = space.check_node(params.basepoint)
    ia, fa = _resolve(a, params, space)
    ib, fb = _resolve(b, params, space)
    d0 = space.distances_from(x0)
    wa = params.weight(d0[ia])
    wb = params.weight(d0[ib])
    out = space.pairwise(ia, ib) / np.outer(wa, wb)
    if fa.any() or fb.any():
        # h(x, inf) = 1 / w(x); h(inf, inf) = 0
        out[fa, :] = (1.0 / wb)[None, :]
        out[:, fb] = (1.0 / wa)[:, None]
        out[np.ix_(fa, fb)] = 0.0
    return out


def chordal_distance(x, y, params: ChordalParams, space: DiscreteSpace) -> float:
    return float(chordal_matrix([x], [y], params, space)[0, 0])


def all_triples(points: Sequence) -> list[tuple]:
    return list(itertools.product(points, repeat=3))


def all_quadruples(points: Sequence) -> list[tuple]:
    return list(itertools.product(points, repeat=4))


def _pairs_values(points: Sequence, pairs: np.ndarray, params: ChordalParams, space: DiscreteSpace) -> np.ndarray:
    mat = chordal_matrix(points, points, params, space)
    return mat[pairs[:, 0], pairs[:, 1]]


def _unique_points(tuples: Sequence[tuple]) -> tuple[list, np.ndarray]:
    """Distinct points (nodes sorted, then INFINITY) and tuples re-indexed into them."""
    flat = [x for t in tuples for x in t]
    nodes = sorted({int(x) for x in flat if not _is_inf(x)})
    pts: list = list(nodes) + ([INFINITY] if any(_is_inf(x) for x in flat) else [])
    pos = {x: k for k, x in enumerate(nodes)}
    inf_pos = len(nodes)
    arr = np.array([[inf_pos if _is_inf(x) else pos[int(x)] for x in t] for t in tuples], dtype=int)
    return pts, arr


@dataclass
class AuditReport:
    max_defect: float
    max_relative_defect: float
    worst_triple: tuple
    n_triples: int

    def passed(self, tol: float = AUDIT_TOL) -> bool:
        return self.max_relative_defect <= tol


def triangle_audit(params: ChordalParams, space: DiscreteSpace, sample_triples: Sequence[tuple]) -> AuditReport:
    """Max over triples of H(x,z) - H(x,y) - H(y,z).

    The relative defect divides by the larger side of the inequality, so that
    the fixed tolerance is meaningful at every scale.
    """
    if len(sample_triples) == 0:
        raise ValueError("triangle_audit needs at least one triple")
    pts, tri = _unique_points(sample_triples)
    mat = chordal_matrix(pts, pts, params, space)
    hxz = mat[tri[:, 0], tri[:, 2]]
    rhs = mat[tri[:, 0], tri[:, 1]] + mat[tri[:, 1], tri[:, 2]]
    defect = hxz - rhs
    scale = np.maximum(np.maximum(hxz, rhs), np.finfo(float).tiny)
    rel = defect / scale
    k = int(np.argmax(defect))
    return AuditReport(float(defect[k]), float(rel.max()), tuple(sample_triples[k]), len(sample_triples))


@dataclass
class PtolemyReport:
    min_slack: float
    worst_quadruple: tuple
    n_quadruples: int


def ptolemy_check(space: DiscreteSpace, sample_quadruples: Sequence[tuple]) -> PtolemyReport:
    """Min over (x, y, z, t) of d(x,z)d(y,t) + d(x,t)d(y,z) - d(x,y)d(z,t)."""
    if len(sample_quadruples) == 0:
        raise ValueError("ptolemy_check needs at least one quadruple")
    for q in sample_quadruples:
        if len(q) != 4:
            raise ValueError(f"not a quadruple: {q!r}")
        for x in q:
            space.check_node(x)
    q = np.asarray(sample_quadruples, dtype=int)
    nodes, inv = np.unique(q, return_inverse=True)
    inv = inv.reshape(q.shape)
    D = space.pairwise(nodes, nodes)
    x, y, z, t = inv.T
    slack = D[x, z] * D[y, t] + D[x, t] * D[y, z] - D[x, y] * D[z, t]
    k = int(np.argmin(slack))
    return PtolemyReport(float(slack[k]), tuple(int(v) for v in sample_quadruples[k]), len(q))


@dataclass
class DiameterResult:
    value: float
    witness_pair: tuple


def _sort_key(x):
    return (1, 0) if _is_inf(x) else (0, int(x))


def chordal_diameter(points: Iterable, params: ChordalParams, space: DiscreteSpace) -> DiameterResult:
    """Max pairwise chordal distance, with the lexicographically smallest witness pair."""
    pts = sorted(set(points), key=_sort_key)
    if not pts:
        raise ValueError("chordal_diameter of an empty set")
    if len(pts) == 1:
        return DiameterResult(0.0, (pts[0], pts[0]))
    mat = chordal_matrix(pts, pts, params, space)
    iu = np.triu_indices(len(pts), 1)
    vals = mat[iu]
    # first maximal entry in row-major upper-triangular order is lexicographically smallest
    k = int(np.argmax(vals))
    i, j = int(iu[0][k]), int(iu[1][k])
    return DiameterResult(float(vals[k]), (pts[i], pts[j]))


class PreconditionError(ValueError):
    pass


def extract_subcontinuum(C: Iterable[int], x0: int, a: float, R: float, space: DiscreteSpace) -> frozenset[int]:
    """Connected C1 in C intersected with the closed ball B(x0, R), with h(C1) >= a/4.

    Follows the constructive argument: if C stays in the closed ball it is
    returned unchanged; otherwise the component of C inside the ball that
    carries the largest chordal diameter is returned.
    """
    C = frozenset(int(v) for v in C)
    if not C:
        raise PreconditionError("C is empty")
    if not (a > 0 and R > 0):
        raise PreconditionError("a and R must be positive")
    params = ChordalParams(space.check_node(x0))
    if not space.is_connected(C):
        raise PreconditionError("C is not connected")
    diam_c = chordal_diameter(C, params, space).value
    if diam_c < a:
        raise PreconditionError(f"chordal diameter of C is {diam_c:.6g} < a = {a}")
    d0 = space.distances_from(params.basepoint)
    outside = np.flatnonzero(d0 >= R)
    if len(outside):
        tail = chordal_diameter(outside.tolist(), params, space).value
        if not tail < a / 2:
            raise PreconditionError(f"chordal diameter of the complement of B(x0, R) is {tail:.6g}, not < a/2")
    inside = frozenset(v for v in C if d0[v] <= R)
    if inside == C:
        return C
    if not inside:
        raise PreconditionError("C does not meet the closed ball")
    comps = space.induced_components(inside)
    best = max(comps, key=lambda c: (chordal_diameter(c, params, space).value, -min(c)))
    got = chordal_diameter(best, params, space).value
    if got < a / 4:
        raise PreconditionError(f"mesh too coarse: best component has chordal diameter {got:.6g} < a/4")
    return best


def metric_equivalence_ratio(
    params1: ChordalParams, params2: ChordalParams, space: DiscreteSpace, samples: Sequence[tuple]
) -> tuple[float, float]:
    """Extremes of H1/H2 over the sampled pairs; pairs with x = y are skipped."""
    if params1.basepoint != params2.basepoint:
        raise ValueError("parameter sets must share the base point")
    pairs = [(x, y) for x, y in samples if x != y]
    if not pairs:
        raise ValueError("all sampled pairs are degenerate")
    pts, arr = _unique_points(pairs)
    h1 = chordal_matrix(pts, pts, params1, space)[arr[:, 0], arr[:, 1]]
    h2 = chordal_matrix(pts, pts, params2, space)[arr[:, 0], arr[:, 1]]
    r = h1 / h2
    return float(r.min()), float(r.max())


@dataclass
class NetResult:
    points: list
    epsilon: float
    covering_radius: float
    tail_radius: float | None


def net_probe(space: DiscreteSpace, params: ChordalParams, epsilon: float) -> NetResult:
    """Greedy epsilon-net of the compactified space, verified by an explicit coverage pass.

    Candidates are x0, then infinity (standard metric only), then the nodes in
    order of distance from x0.  ``tail_radius`` is the radius beyond which every
    node is covered by infinity, when infinity belongs to the net.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x0 = space.check_node(params.basepoint)
    d0 = space.distances_from(x0)
    order = np.lexsort((np.arange(space.n_nodes), d0))
    cands: list = [x0] + ([INFINITY] if params.is_standard else []) + [int(v) for v in order if v != x0]
    allpts: list = list(range(space.n_nodes)) + ([INFINITY] if params.is_standard else [])
    covered = np.zeros(len(allpts), dtype=bool)
    pos = {x: k for k, x in enumerate(allpts)}
    net: list = []
    for c in cands:
        if covered[pos[c]]:
            continue
        net.append(c)
        covered |= chordal_matrix([c], allpts, params, space)[0] <= epsilon
        if covered.all():
            break
    # independent verification
    cover = np.full(len(allpts), np.inf)
    for c in net:
        cover = np.minimum(cover, chordal_matrix([c], allpts, params, space)[0])
    radius = float(cover.max())
    if radius > epsilon:
        raise RuntimeError(f"net does not cover: radius {radius} > {epsilon}")
    tail = math.sqrt(max(1.0 / epsilon**2 - 1.0, 0.0)) if INFINITY in net else None
    return NetResult(net, float(epsilon), radius, tail)


def tail_diameter(space: DiscreteSpace, params: ChordalParams, R: float, include_infinity: bool = True) -> float:
    """Chordal diameter of the nodes outside the open ball B(x0, R), optionally with infinity."""
    d0 = space.distances_from(space.check_node(params.basepoint))
    pts: list = np.flatnonzero(d0 >= R).tolist()
    if include_infinity and params.is_standard:
        pts.append(INFINITY)
    if not pts:
        return 0.0
    return chordal_diameter(pts, params, space).value


# --------------------------------------------------------------------------- extended plane


def sphere_embedding(w, basepoint: complex = 0.0) -> np.ndarray:
    """Stereographic image of extended-plane points on the sphere of diameter one.

    Euclidean distance between images equals the standard chordal distance
    h(w1, w2) = |w1 - w2| / (sqrt(1 + |w1 - c|^2) sqrt(1 + |w2 - c|^2)) with
    c the base point; infinite entries map to the north pole.
    """
    u = np.asarray(w, dtype=complex) - complex(basepoint)
    out = np.zeros(u.shape + (3,))
    inf = ~np.isfinite(u)
    fin = ~inf
    uf = u[fin]
    a = np.abs(uf)
    # |u|^2 overflows for huge finite u, so large moduli use 1/|u| instead
    big = a > 1.0
    scale = np.empty_like(a)
    height = np.empty_like(a)
    small = a[~big]
    scale[~big] = 1.0 / (1.0 + small * small)
    height[~big] = small * small * scale[~big]
    inv = 1.0 / a[big]
    height[big] = 1.0 / (1.0 + inv * inv)
    scale[big] = inv * inv * height[big]
    out[fin, 0] = uf.real * scale
    out[fin, 1] = uf.imag * scale
    out[fin, 2] = height
    out[inf, 2] = 1.0
    return out


def chordal_plane(w1, w2, basepoint: complex = 0.0) -> np.ndarray:
    """Standard chordal distance between extended-plane points (broadcasting)."""
    e1 = sphere_embedding(w1, basepoint)
    e2 = sphere_embedding(w2, basepoint)
    return np.linalg.norm(e1 - e2, axis=-1)
