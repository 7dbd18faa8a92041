"""Ring Q-mapping checks for concrete planar maps on discretized domains.

Maps act on node coordinates (read as complex numbers in the plane).  Image
families are built either by pushing explicit paths forward (snap to the image
lattice, collapse repeats, reconnect by shortest hops) or, for invertible maps,
by pulling the image lattice back through the inverse.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .fmo import PsiProfile, ScalarField, eta_normalized, funnel_ratio
from .modulus import INFINITE, ModulusResult, PathFamily, compute_p_modulus
from .space import DiscreteSpace, RingSpec

log = logging.getLogger(__name__)

__all__ = [
    "DiscreteMap",
    "RingTestCase",
    "RingResult",
    "DecayReport",
    "get_map",
    "MAP_NAMES",
    "map_image_family",
    "image_ring_family",
    "ring_inequality_test",
    "ring_battery",
    "modulus_decay_probe",
    "ring_sum",
    "eta_battery",
]


def _to_complex(pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts[..., 0] + 1j * pts[..., 1]


def _to_real(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


@dataclass(frozen=True)
class DiscreteMap:
    """A planar map with an optional inverse and a registered candidate Q."""

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray] | None = None
    Q: ScalarField | None = None
    notes: str = ""

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(pts, dtype=float))


def _identity() -> DiscreteMap:
    return DiscreteMap("identity", lambda x: x.copy(), lambda y: y.copy(), ScalarField.constant(1.0), "conformal")


def _radial_stretch(K: float) -> DiscreteMap:
    if not K > 0:
        raise ValueError("stretch exponent K must be positive")

    def scale(x, power):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, safe**power, 0.0) * x

    def fwd(x):
        return scale(x, K - 1.0)

    def inv(y):
        return scale(y, 1.0 / K - 1.0)

    return DiscreteMap(
        f"radial_stretch(K={K:g})", fwd, inv, ScalarField.constant(max(K, 1.0 / K)), "homeomorphism, quasiconformal"
    )


def _exp_reciprocal() -> DiscreteMap:
    def fwd(x):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return _to_real(np.exp(1.0 / _to_complex(x)))

    return DiscreteMap("exp_reciprocal", fwd, None, None, "essential singularity at 0; omits the value 0")


def _sinc() -> DiscreteMap:
    def fwd(x):
        z = _to_complex(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(z == 0, 1.0 + 0j, np.sin(z) / np.where(z == 0, 1.0, z))
        return _to_real(out)

    return DiscreteMap("sinc", fwd, None, None, "removable singularity at 0 with value 1")


def _constant(c: Sequence[float] = (0.0, 0.0)) -> DiscreteMap:
    c = np.asarray(c, dtype=float)
    return DiscreteMap("constant", lambda x: np.broadcast_to(c, np.shape(x)).copy(), None, None, "degenerate")


_REGISTRY: dict[str, Callable[..., DiscreteMap]] = {
    "identity": _identity,
    "radial_stretch": _radial_stretch,
    "exp_reciprocal": _exp_reciprocal,
    "sinc": _sinc,
    "constant": _constant,
}
MAP_NAMES = tuple(_REGISTRY)


def get_map(name: str, **params) -> DiscreteMap:
    try:
        return _REGISTRY[name](**params)
    except KeyError:
        raise ValueError(f"unknown map {name!r}; known: {', '.join(MAP_NAMES)}") from None


# --------------------------------------------------------------------------- image families


def _snap(image_space: DiscreteSpace, pts: np.ndarray, owners: Sequence[int]) -> np.ndarray:
    """Nearest image node per point (lowest id on ties); points off the image region raise."""
    reach = image_space.max_edge_length if image_space.n_edges else (image_space.mesh_step or 0.0)
    out = np.empty(len(pts), dtype=int)
    for k, (y, v) in enumerate(zip(pts, owners)):
        if not np.all(np.isfinite(y)):
            raise ValueError(f"image of node {v} is not finite")
        d = image_space.distances_from(y)
        j = int(np.argmin(d))
        if d[j] > reach:
            raise ValueError(f"image of node {v} lies outside the image space")
        out[k] = j
    return out


def _reconnect(image_space: DiscreteSpace, nodes: Sequence[int]) -> tuple[int, ...]:
    path = [int(nodes[0])]
    adj = image_space.adjacency
    for v in nodes[1:]:
        u = path[-1]
        v = int(v)
        if v == u:
            continue
        if adj[u, v] != 0:
            path.append(v)
            continue
        _, pred = shortest_path(adj, directed=False, unweighted=True, indices=u, return_predecessors=True)
        if pred[v] < 0:
            raise ValueError(f"image nodes {u} and {v} are not connected in the image space")
        hop = [v]
        while hop[-1] != u:
            hop.append(int(pred[hop[-1]]))
        path.extend(reversed(hop[:-1]))
    return tuple(path)


def map_image_family(f: DiscreteMap, family: PathFamily, space: DiscreteSpace, image_space: DiscreteSpace) -> PathFamily:
    """Image of a path family on the image lattice.

    Explicit paths are pushed forward: node images are snapped, consecutive
    duplicates collapsed and broken adjacencies bridged by shortest hop paths.
    Connecting families are pulled back: an image node belongs to E', F' or G'
    when the source node nearest to its preimage belongs to E, F or G.
    """
    if space.coords is None:
        raise ValueError("maps act on node coordinates")
    if family.is_explicit:
        out = []
        for path in family.paths:
            pts = f(space.coords[list(path)])
            snapped = _snap(image_space, pts, path)
            out.append(_reconnect(image_space, snapped))
        return PathFamily.explicit(out)
    if f.inverse is None:
        raise ValueError(f"map {f.name} has no registered inverse; connecting families need one")
    pre = f.inverse(image_space.coords)
    owner = np.array([space.nearest_node(z) for z in pre], dtype=int)
    reach = space.max_edge_length
    far = np.linalg.norm(space.coords[owner] - pre, axis=1) > reach

    def pull(S):
        mask = np.zeros(space.n_nodes, dtype=bool)
        mask[list(S)] = True
        return frozenset(np.flatnonzero(mask[owner] & ~far).tolist())

    return PathFamily.connecting(pull(family.sources), pull(family.targets), pull(family.through))


def image_ring_family(f: DiscreteMap, ring: RingSpec, image_space: DiscreteSpace) -> PathFamily:
    """f(Gamma(S(x0, r1), S(x0, r2), A(x0, r1, r2))) on the image lattice, by exact pullback.

    G' holds image nodes whose preimage lies in the open ring; the shells are
    the nodes just outside G' (preimage inside S(x0, r1) or outside S(x0, r2))
    that share an edge with G'.  Only such nodes can start or end an edge path
    through G', so thicker shells would not change the family's modulus.
    """
    if f.inverse is None:
        raise ValueError(f"map {f.name} has no registered inverse")
    pre = f.inverse(image_space.coords)
    d = np.linalg.norm(pre - np.asarray(ring.center, dtype=float), axis=1)
    inside = (d > ring.r1) & (d < ring.r2)
    i, j = image_space.edges[:, 0], image_space.edges[:, 1]
    touch = np.zeros(image_space.n_nodes, dtype=bool)
    touch[i[inside[j]]] = True
    touch[j[inside[i]]] = True
    touch &= ~inside
    s1 = frozenset(np.flatnonzero(touch & (d <= ring.r1)).tolist())
    s2 = frozenset(np.flatnonzero(touch & (d >= ring.r2)).tolist())
    return PathFamily.connecting(s1, s2, frozenset(np.flatnonzero(inside).tolist()))


# --------------------------------------------------------------------------- ring inequality


def eta_battery(r1: float, r2: float, log_scale: float) -> dict[str, PsiProfile]:
    """Constant, psi-of-log and 1/t profiles; each is normalized over (r1, r2) when used."""
    if not log_scale > r2:
        raise ValueError("log profile scale must exceed the outer radius")
    return {
        "constant": PsiProfile("constant"),
        "log": PsiProfile("log", scale=log_scale),
        "inverse": PsiProfile("power", exponent=-1.0),
    }


@dataclass
class RingTestCase:
    ring: RingSpec
    profile: PsiProfile
    p: float = 2.0
    q: float = 2.0
    Q: ScalarField = field(default_factory=ScalarField.constant)
    eta_name: str = ""

    def __post_init__(self):
        if not (self.p > 1 and self.q >= 1):
            raise ValueError("need p > 1 and q >= 1")
        self.eta = eta_normalized(self.profile, self.ring.r1, self.ring.r2)


def ring_sum(Q: ScalarField, eta, q: float, x0, r1: float, r2: float, space: DiscreteSpace) -> float:
    """Sum over nodes with r1 < d(x, x0) < r2 of Q(x) eta(d)^q mu(x)."""
    d = space.distances_from(x0)
    idx = np.flatnonzero((d > r1) & (d < r2))
    qv = Q.values(space)[idx]
    w = qv * eta(d[idx]) ** q * space.measure[idx]
    return float(np.where(qv == 0, 0.0, w).sum())


@dataclass
class RingResult:
    ring: RingSpec
    eta_name: str
    lhs: float | object
    rhs: float
    holds: bool
    margin: float
    diagnosis: str = ""
    modulus: ModulusResult | None = field(default=None, repr=False)

    def row(self) -> dict:
        lhs = "+inf" if self.lhs is INFINITE else self.lhs
        return {
            "r1": self.ring.r1,
            "r2": self.ring.r2,
            "eta": self.eta_name,
            "lhs": lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "holds": int(self.holds),
        }


def ring_inequality_test(
    case: RingTestCase,
    f: DiscreteMap,
    x0,
    space: DiscreteSpace,
    image_space: DiscreteSpace,
    tol: float = 1e-6,
) -> RingResult:
    """lhs = M_p of the image ring family; rhs = ring sum of Q eta^q mu; holds iff lhs <= rhs (1 + tol)."""
    ring = RingSpec(x0, case.ring.r1, case.ring.r2)
    fam = image_ring_family(f, ring, image_space)
    if not fam.sources or not fam.targets:
        raise ValueError(f"ring ({ring.r1}, {ring.r2}) has an empty boundary shell on the image lattice")
    rhs = ring_sum(case.Q, case.eta, case.q, x0, ring.r1, ring.r2, space)
    res = compute_p_modulus(image_space, fam, case.p)
    if res.is_infinite:
        return RingResult(case.ring, case.eta_name, INFINITE, rhs, False, -math.inf, "image family has no admissible density", res)
    lhs = float(res.value)
    holds = lhs <= rhs * (1 + tol)
    return RingResult(case.ring, case.eta_name, lhs, rhs, holds, rhs - lhs, "" if holds else "inequality violated", res)


def ring_battery(
    f: DiscreteMap,
    rings: Sequence[tuple[float, float]],
    profiles: dict[str, PsiProfile] | Callable[[float, float], dict[str, PsiProfile]],
    x0,
    space: DiscreteSpace,
    image_space: DiscreteSpace,
    Q: ScalarField | None = None,
    p: float = 2.0,
    q: float = 2.0,
    tol: float = 1e-6,
) -> list[RingResult]:
    """Every ring against every eta profile; one modulus solve per ring."""
    Q = Q if Q is not None else (f.Q or ScalarField.constant())
    out: list[RingResult] = []
    for r1, r2 in rings:
        ring = RingSpec(x0, r1, r2)
        profs = profiles(r1, r2) if callable(profiles) else profiles
        fam = image_ring_family(f, ring, image_space)
        if not fam.sources or not fam.targets:
            raise ValueError(f"ring ({r1}, {r2}) has an empty boundary shell on the image lattice")
        res = compute_p_modulus(image_space, fam, p)
        for name, prof in profs.items():
            case = RingTestCase(ring, prof, p, q, Q, name)
            rhs = ring_sum(Q, case.eta, q, x0, r1, r2, space)
            if res.is_infinite:
                out.append(RingResult(ring, name, INFINITE, rhs, False, -math.inf, "image family has no admissible density", res))
                continue
            lhs = float(res.value)
            holds = lhs <= rhs * (1 + tol)
            out.append(RingResult(ring, name, lhs, rhs, holds, rhs - lhs, "" if holds else "inequality violated", res))
    return out


@dataclass
class DecayReport:
    eps: list[float]
    observed: list[float]
    bound: list[float]
    holds: list[bool]
    stopped_at: float | None = None

    def strictly_decreasing(self, last: int = 4) -> tuple[bool, bool]:
        """Whether observed and bound strictly decrease over the final ``last`` steps."""
        o = np.asarray(self.observed[-(last + 1) :])
        b = np.asarray(self.bound[-(last + 1) :])
        ok = len(self.observed) > last
        return ok and bool(np.all(np.diff(o) < 0)), ok and bool(np.all(np.diff(b) < 0))

    def rows(self) -> list[dict]:
        return [
            {"eps": e, "observed": o, "bound": b, "holds": int(h)}
            for e, o, b, h in zip(self.eps, self.observed, self.bound, self.holds)
        ]


def modulus_decay_probe(
    f: DiscreteMap,
    Q: ScalarField,
    x0,
    radii: Sequence[float],
    profile: PsiProfile,
    p: float,
    q: float,
    space: DiscreteSpace,
    image_space: DiscreteSpace,
    r_outer: float,
    tol: float = 1e-6,
) -> DecayReport:
    """Observed M_p(f(Gamma(S(x0, eps), S(x0, r_outer), A))) against F(eps) for shrinking eps.

    F(eps) is the funnel ratio with eps0 = r_outer, i.e. the ring sum for
    eta = psi / I(eps, r_outer).  Stops early, with a partial report, once the
    lattice can no longer resolve the inner sphere.
    """
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    if radii and radii[0] >= r_outer:
        raise ValueError("inner radii must lie below r_outer")
    rep = DecayReport([], [], [], [])
    for eps in radii:
        fam = image_ring_family(f, RingSpec(x0, eps, r_outer), image_space)
        if not fam.sources or not fam.targets or not fam.through:
            log.warning("ring shells empty at eps=%g; stopping at the mesh limit", eps)
            rep.stopped_at = eps
            break
        bound = funnel_ratio(Q, profile, q, x0, eps, r_outer, space)
        res = compute_p_modulus(image_space, fam, p)
        obs = math.inf if res.is_infinite else float(res.value)
        rep.eps.append(eps)
        rep.observed.append(obs)
        rep.bound.append(bound)
        rep.holds.append(obs <= bound * (1 + tol))
        log.info("eps=%g observed=%.6g bound=%.6g", eps, obs, bound)
    return rep
