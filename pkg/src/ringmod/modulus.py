"""Discrete p-modulus of path families, condenser capacity and related checks.

Densities live on nodes.  The rho-length of an edge path is the trapezoidal sum
``sum sigma(e) * (rho(u) + rho(v)) / 2`` and the p-energy is
``sum rho(v)**p * mu(v)``.

``compute_p_modulus`` uses constraint generation: a restricted problem over an
active set of paths is solved exactly through its Lagrange dual (a smooth
bound-constrained concave program, solved by a primal-dual interior point
method), then a
shortest-path search under the current density finds the most violated paths.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, dijkstra
from scipy.sparse.linalg import spsolve, splu

from .chordal import PreconditionError, chordal_diameter
from .space import DiscreteSpace

log = logging.getLogger(__name__)

__all__ = [
    "INFINITE",
    "Infinite",
    "PathFamily",
    "Density",
    "ModulusResult",
    "Condenser",
    "SolverError",
    "PreconditionError",
    "path_length",
    "admissibility_check",
    "compute_p_modulus",
    "brute_force_modulus",
    "conductance_oracle",
    "minorization_test",
    "condenser_capacity",
    "capacity_family",
    "pr2_floor",
    "capacity_floor_check",
    "ring_family",
    "DEFAULT_TOL",
    "DEFAULT_KKT_TOL",
]

DEFAULT_TOL = 1e-6
DEFAULT_KKT_TOL = 1e-8
POTENTIAL_THRESHOLD = 100


class Infinite:
    """Tagged +infinity for moduli of families without admissible densities."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __str__(self):
        return "+inf"

    def __float__(self):
        return math.inf

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("ringmod.INFINITE")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __reduce__(self):
        return (Infinite, ())


INFINITE = Infinite()


class SolverError(RuntimeError):
    """Constraint generation did not converge; carries the best (lower, upper) bound pair."""

    def __init__(self, message, bounds=(None, None)):
        super().__init__(message)
        self.bounds = bounds


@dataclass(frozen=True)
class PathFamily:
    """Either an explicit list of node paths or the connecting family Gamma(E, F, G).

    For a connecting family a path starts in ``sources`` (E), ends in
    ``targets`` (F) and all its interior nodes lie in ``through`` (G).
    """

    paths: tuple[tuple[int, ...], ...] | None = None
    sources: frozenset[int] | None = None
    targets: frozenset[int] | None = None
    through: frozenset[int] | None = None

    @classmethod
    def explicit(cls, paths: Iterable[Sequence[int]]) -> "PathFamily":
        return cls(paths=tuple(tuple(int(v) for v in p) for p in paths))

    @classmethod
    def connecting(cls, E: Iterable[int], F: Iterable[int], G: Iterable[int]) -> "PathFamily":
        return cls(sources=frozenset(int(v) for v in E), targets=frozenset(int(v) for v in F), through=frozenset(int(v) for v in G))

    @property
    def is_explicit(self) -> bool:
        return self.paths is not None

    def is_empty(self) -> bool:
        if self.is_explicit:
            return len(self.paths) == 0
        return not self.sources or not self.targets

    def union(self, other: "PathFamily") -> "PathFamily":
        if not (self.is_explicit and other.is_explicit):
            raise ValueError("union is only defined for explicit families")
        seen = dict.fromkeys(self.paths + other.paths)
        return PathFamily(paths=tuple(seen))

    def to_record(self) -> dict:
        if self.is_explicit:
            return {"kind": "explicit", "paths": [list(p) for p in self.paths]}
        return {
            "kind": "connecting",
            "E": sorted(self.sources),
            "F": sorted(self.targets),
            "G": sorted(self.through),
        }


@dataclass
class Density:
    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(~np.isfinite(self.rho)) or np.any(self.rho < 0):
            raise ValueError("density values must be finite and nonnegative")

    def energy(self, space: DiscreteSpace, p: float) -> float:
        return float(np.sum(self.rho**p * space.measure))


@dataclass
class ModulusResult:
    value: float | Infinite
    optimal_density: Density | None
    active_paths: list[tuple[int, ...]] = field(default_factory=list)
    iterations: int = 0
    certified_gap: float = 0.0
    lower_bound: float | Infinite = 0.0
    upper_bound: float | Infinite = 0.0
    min_path_length: float | Infinite = INFINITE
    p: float = 2.0

    @property
    def is_infinite(self) -> bool:
        return self.value is INFINITE

    def records(self) -> list[dict]:
        def tag(x):
            return "+inf" if x is INFINITE else float(x)

        head = {
            "kind": "modulus",
            "p": self.p,
            "value": tag(self.value),
            "lower_bound": tag(self.lower_bound),
            "upper_bound": tag(self.upper_bound),
            "gap": tag(self.certified_gap),
            "iterations": self.iterations,
            "active_paths": len(self.active_paths),
            "min_path_length": tag(self.min_path_length),
        }
        out = [head]
        if self.optimal_density is not None:
            for v, r in enumerate(self.optimal_density.rho):
                if r > 0:
                    out.append({"kind": "density", "node": v, "rho": float(r)})
        return out

    def write_records(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


@dataclass(frozen=True)
class Condenser:
    A: frozenset[int]
    C: frozenset[int]

    def __post_init__(self):
        if not self.C:
            raise PreconditionError("condenser plate C must be nonempty")
        if not self.C <= self.A:
            raise PreconditionError("condenser plate C must lie inside A")


# --------------------------------------------------------------------------- paths


def _check_path(space: DiscreteSpace, path: Sequence[int]) -> None:
    for v in path:
        space.check_node(v)
    for u, v in zip(path[:-1], path[1:]):
        if (min(u, v), max(u, v)) not in space.edge_index:
            raise ValueError(f"path is not edge-connected: {u} -> {v}")


def path_coefficients(space: DiscreteSpace, path: Sequence[int]) -> dict[int, float]:
    """Node weights a(v) with rho-length = sum a(v) rho(v)."""
    coef: dict[int, float] = {}
    for u, v in zip(path[:-1], path[1:]):
        s = space.edge_length_between(u, v)
        coef[u] = coef.get(u, 0.0) + 0.5 * s
        coef[v] = coef.get(v, 0.0) + 0.5 * s
    return coef


def path_length(path: Sequence[int], density: Density | np.ndarray, space: DiscreteSpace) -> float:
    rho = density.rho if isinstance(density, Density) else np.asarray(density, dtype=float)
    path = [int(v) for v in path]
    _check_path(space, path)
    return float(sum(a * rho[v] for v, a in path_coefficients(space, path).items()))


def _coefficient_matrix(space: DiscreteSpace, paths: Sequence[Sequence[int]]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for k, path in enumerate(paths):
        for v, a in path_coefficients(space, path).items():
            rows.append(k)
            cols.append(v)
            vals.append(a)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(paths), space.n_nodes))


class _Separator:
    """Finds the shortest (and other violated) paths of a family under a density."""

    def __init__(self, space: DiscreteSpace, family: PathFamily):
        self.space = space
        self.family = family
        if family.is_explicit:
            for path in family.paths:
                _check_path(space, path)
            self.A_all = _coefficient_matrix(space, family.paths)
        else:
            E, F, G = family.sources, family.targets, family.through
            for v in itertools.chain(E, F, G):
                space.check_node(v)
            n = space.n_nodes
            can_leave = np.zeros(n, dtype=bool)
            can_enter = np.zeros(n, dtype=bool)
            can_leave[list(E | G)] = True
            can_enter[list(F | G)] = True
            i, j = space.edges[:, 0], space.edges[:, 1]
            src = np.concatenate([i, j])
            dst = np.concatenate([j, i])
            ok = can_leave[src] & can_enter[dst]
            self.arc_src = src[ok]
            self.arc_dst = dst[ok]
            lengths = np.concatenate([space.edge_length, space.edge_length])
            self.arc_len = lengths[ok]
            self.sources = np.array(sorted(E), dtype=int)
            self.targets = np.array(sorted(F), dtype=int)
            self.zero_length = bool(E & F)

    def has_zero_length_path(self) -> bool:
        if self.family.is_explicit:
            return any(len(p) == 1 for p in self.family.paths)
        return self.zero_length

    def search(self, rho: np.ndarray, threshold: float, max_paths: int) -> tuple[float, tuple[int, ...] | None, list[tuple[int, ...]]]:
        """Return (min length, a minimizing path, violated paths sorted by length)."""
        if self.family.is_explicit:
            if not self.family.paths:
                return math.inf, None, []
            lengths = self.A_all @ rho
            order = np.lexsort((np.arange(len(lengths)), lengths))
            best = int(order[0])
            viol = [self.family.paths[k] for k in order[:max_paths] if lengths[k] < threshold]
            return float(lengths[best]), self.family.paths[best], viol
        if len(self.sources) == 0 or len(self.targets) == 0:
            return math.inf, None, []
        n = self.space.n_nodes
        # a tiny positive floor keeps zero-density arcs present in the sparse graph
        w = self.arc_len * 0.5 * (rho[self.arc_src] + rho[self.arc_dst])
        w = np.maximum(w, 1e-300)
        graph = sp.csr_matrix((w, (self.arc_src, self.arc_dst)), shape=(n, n))
        dist, pred, _ = dijkstra(graph, directed=True, indices=self.sources, min_only=True, return_predecessors=True)
        dist = np.where(np.isin(np.arange(n), self.sources), 0.0, dist)
        tdist = dist[self.targets]
        if not np.isfinite(tdist).any():
            return math.inf, None, []
        order = np.lexsort((self.targets, tdist))
        best_path = self._trace(pred, int(self.targets[order[0]]))
        viol: list[tuple[int, ...]] = []
        seen = set()
        for k in order:
            if not tdist[k] < threshold or len(viol) >= max_paths:
                break
            path = self._trace(pred, int(self.targets[k]))
            if path not in seen:
                seen.add(path)
                viol.append(path)
        return float(tdist[order[0]]), best_path, viol

    @staticmethod
    def _trace(pred: np.ndarray, t: int) -> tuple[int, ...]:
        path = [t]
        while pred[path[-1]] >= 0:
            path.append(int(pred[path[-1]]))
        return tuple(reversed(path))


def admissibility_check(density: Density | np.ndarray, family: PathFamily, space: DiscreteSpace, tol: float = DEFAULT_TOL):
    """Return ``(admissible, worst_path, worst_length)``; worst length is INFINITE for the empty family."""
    rho = density.rho if isinstance(density, Density) else np.asarray(density, dtype=float)
    sep = _Separator(space, family)
    if family.is_empty():
        return True, None, INFINITE
    length, path, _ = sep.search(rho, 1.0 - tol, 1)
    if path is None:
        return True, None, INFINITE
    return bool(length >= 1.0 - tol), path, length


# --------------------------------------------------------------------------- restricted solver


class _DualProblem:
    """Lagrange dual of  min sum mu rho^p  s.t.  A rho >= 1, rho >= 0.

    phi(lam) = (p-1) sum mu (s/(p mu))^(p/(p-1)) - sum lam,   s = A^T lam,
    minimized over lam >= 0; the primal density is rho = (s/(p mu))^(1/(p-1)).
    """

    def __init__(self, A: sp.csr_matrix, mu: np.ndarray, p: float):
        self.A = A
        self.At = A.T.tocsr()
        self.mu = mu
        self.p = p
        self.q = p / (p - 1.0)

    def rho(self, lam):
        s = self.At @ lam
        return np.power(np.maximum(s, 0.0) / (self.p * self.mu), 1.0 / (self.p - 1.0)), s

    def value(self, lam):
        rho, s = self.rho(lam)
        return (self.p - 1.0) * np.sum(self.mu * rho**self.p) - lam.sum()

    def curvature(self, rho, s):
        """d rho / d s, the diagonal middle factor of the dual Hessian A D A^T."""
        if self.p == 2.0:
            return 0.5 / self.mu
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(s > 0, rho / ((self.p - 1.0) * s), 0.0)

    def restricted_gap(self, lam, rho) -> float:
        """Relative duality gap on the active paths: rho rescaled to be admissible against -phi(lam)."""
        m = float(np.min(self.A @ rho))
        if not m > 0:
            return math.inf
        upper = float(np.sum(self.mu * rho**self.p)) / m**self.p
        return (upper + self.value(lam)) / max(1.0, upper)

    def solve(self, lam0, kkt_tol, gap_tol=0.0, max_iter=200):
        """Primal-dual barrier method on  min phi(lam), lam >= 0.

        z is the multiplier of lam >= 0.  Each step solves the primal-dual
        Newton system for phi - t sum log lam with t = sigma * mean(lam z); its
        direction descends that barrier function, and Armijo backtracking on it
        makes convergence independent of the start (the dual is strongly
        nonlinear for p != 2).  Stops when max |min(lam, grad phi)| is below
        ``kkt_tol``; grad phi = A rho - 1 is the excess rho-length of each
        active path.  Also stops once the restricted duality gap is below
        ``gap_tol``, which is what terminates degenerate problems (a tight path
        with zero multiplier) where the residual only decays like a power of
        the barrier weight.  Returns ``(lam, rho, resid, gap, iterations)``
        with rho scaled up, if needed, so every active path has length >= 1.
        """
        A = self.A
        k, n = A.shape
        dense = A.toarray() if k * n <= 4_000_000 else None
        lam = np.asarray(lam0, dtype=float)
        if not np.any(lam > 0):
            # uniform start scaled so that the mean path length is about one
            g1 = float(np.mean(A @ self.rho(np.ones(k))[0]))
            lam = np.full(k, (1.0 / g1) ** (self.p - 1.0))
        lam = np.maximum(lam, 1e-3 * float(lam.max()))
        rho, s = self.rho(lam)
        grad = A @ rho - 1.0
        z = max(float(np.mean(np.abs(lam * grad))), kkt_tol) / lam

        def barrier(x, t):
            return self.value(x) - t * float(np.sum(np.log(x)))

        resid = np.inf
        it = 0
        for it in range(max_iter):
            resid = float(np.max(np.abs(np.minimum(lam, grad))))
            if resid < kkt_tol and np.all(grad > -kkt_tol):
                break
            if gap_tol > 0 and self.restricted_gap(lam, rho) <= gap_tol:
                break
            t = 0.1 * float(lam @ z) / k
            d = self.curvature(rho, s)
            if dense is not None:
                H = (dense * d) @ dense.T
            else:
                H = (A.multiply(d) @ A.T).toarray()
            H[np.diag_indices(k)] += z / lam
            g = grad - t / lam
            try:
                dl = la.cho_solve(la.cho_factor(H, check_finite=False), -g, check_finite=False)
            except la.LinAlgError:
                dl = la.lstsq(H, -g, check_finite=False)[0]
            dz = t / lam - z - z / lam * dl
            alpha = _step_to_boundary(lam, dl)
            f0, slope = barrier(lam, t), float(g @ dl)
            while alpha > 1e-14 and barrier(lam + alpha * dl, t) > f0 + 1e-4 * alpha * slope:
                alpha *= 0.5
            if alpha * float(np.max(np.abs(dl))) <= 1e-15 * float(lam.max()):
                break
            lam = lam + alpha * dl
            z = z + min(alpha, _step_to_boundary(z, dz)) * dz
            # keep z within a bounded factor of its central value t / lam
            z = np.clip(z, 1e-3 * t / lam, 1e3 * t / lam)
            rho, s = self.rho(lam)
            grad = A @ rho - 1.0
        resid = float(np.max(np.abs(np.minimum(lam, grad))))
        gap = self.restricted_gap(lam, rho)
        m = float(np.min(A @ rho))
        if 0 < m < 1:
            # the scaled density is feasible for every active path
            rho = rho / m
        return lam, rho, resid, gap, it


def _step_to_boundary(x: np.ndarray, dx: np.ndarray, frac: float = 0.995) -> float:
    neg = dx < 0
    return min(1.0, frac * float(np.min(-x[neg] / dx[neg]))) if neg.any() else 1.0


class _PotentialProgram:
    """Connecting-family modulus as one sparse convex program.

    A density rho is admissible for Gamma(E, F, G) iff some potential phi has
    phi = 0 on E, phi >= 1 on F and phi(v) - phi(u) <= sigma (rho(u) + rho(v)) / 2
    on every allowed arc u -> v.  The joint program in (rho, phi) is solved by a
    primal-dual interior point method whose Newton systems are sparse and SPD.

    Each iterate yields certified bounds: the energy of rho scaled to be
    admissible (upper) and a Lagrangian value of the arc multipliers with phi
    boxed to [0, 1] (lower).
    """

    def __init__(self, space: DiscreteSpace, sep: _Separator, p: float):
        self.space = space
        self.sep = sep
        self.p = p
        n = space.n_nodes
        src, dst, alen = sep.arc_src, sep.arc_dst, sep.arc_len
        graph = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(n, n))
        # only nodes on some E -> F arc path matter
        keep = _reachable(graph, sep.sources) & _reachable(graph.T.tocsr(), sep.targets)
        ok = keep[src] & keep[dst]
        self.src, self.dst, self.alen = src[ok], dst[ok], alen[ok]
        self.R = np.flatnonzero(keep)
        nr = len(self.R)
        ridx = -np.ones(n, dtype=int)
        ridx[self.R] = np.arange(nr)
        is_src = np.zeros(n, dtype=bool)
        is_src[sep.sources] = True
        self.P = self.R[~is_src[self.R]]
        pidx = -np.ones(n, dtype=int)
        pidx[self.P] = nr + np.arange(len(self.P))
        self.T = sep.targets[keep[sep.targets]]
        na, nt = len(self.src), len(self.T)
        self.nr, self.na, self.nt = nr, na, nt
        arange = np.arange(na)
        rows, cols, vals = [], [], []
        for arr, sign in ((self.dst, 1.0), (self.src, -1.0)):
            m = pidx[arr] >= 0
            rows.append(arange[m])
            cols.append(pidx[arr][m])
            vals.append(np.full(int(m.sum()), sign))
        for arr in (self.src, self.dst):
            rows.append(arange)
            cols.append(ridx[arr])
            vals.append(-0.5 * self.alen)
        rows.append(na + np.arange(nt))
        cols.append(pidx[self.T])
        vals.append(-np.ones(nt))
        rows.append(na + nt + np.arange(nr))
        cols.append(np.arange(nr))
        vals.append(-np.ones(nr))
        self.m = na + nt + nr
        self.C = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.m, nr + len(self.P))
        )
        self.Ct = self.C.T.tocsr()
        self.b = np.zeros(self.m)
        self.b[na : na + nt] = -1.0
        self.mu = space.measure[self.R]

    @property
    def empty(self) -> bool:
        return self.nt == 0

    def full(self, rho_r: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.n_nodes)
        out[self.R] = np.maximum(rho_r, 0.0)
        return out

    def start(self):
        n = self.space.n_nodes
        L0, _, _ = self.sep.search(np.ones(n), -math.inf, 0)
        rho = np.full(self.nr, 3.0 / L0)
        full = self.full(rho)
        w = self.alen * 0.5 * (full[self.src] + full[self.dst])
        g = sp.csr_matrix((w, (self.src, self.dst)), shape=(n, n))
        dist = dijkstra(g, directed=True, indices=self.sep.sources, min_only=True)
        x = np.concatenate([rho, 0.5 * dist[self.P]])
        s = self.b - self.C @ x
        y = float(np.sum(self.mu * rho**self.p)) / self.m / s
        return x, s, y

    def bounds(self, rho_r: np.ndarray, y: np.ndarray):
        """(lower, upper, admissible density, min length) from the current iterate."""
        p, n = self.p, self.space.n_nodes
        rho = self.full(rho_r)
        L, _, _ = self.sep.search(rho, -math.inf, 0)
        upper = float(np.sum(self.space.measure * rho**p)) / L**p if L > 0 else math.inf
        ya, yt = y[: self.na], y[self.na : self.na + self.nt]
        load = np.zeros(n)
        np.add.at(load, self.src, 0.5 * self.alen * ya)
        np.add.at(load, self.dst, 0.5 * self.alen * ya)
        excess = np.zeros(n)
        np.add.at(excess, self.dst, ya)
        np.add.at(excess, self.src, -ya)
        np.add.at(excess, self.T, -yt)
        sv = np.maximum(load[self.R], 0.0)
        q = p / (p - 1.0)
        lower = float(yt.sum() + np.minimum(excess[self.P], 0.0).sum() - (p - 1.0) * np.sum(self.mu * (sv / (p * self.mu)) ** q))
        return lower, upper, rho / L if L > 0 else rho, L

    def solve(self, gap_tol: float, max_iter: int = 100):
        p, nr = self.p, self.nr
        C, Ct, b, mu = self.C, self.Ct, self.b, self.mu
        x, s, y = self.start()
        best_lo, best_hi, best_rho = -math.inf, math.inf, None
        stall = 0
        it = 0
        for it in range(1, max_iter + 1):
            rho = np.maximum(x[:nr], 1e-300)
            lo, hi, dens, _ = self.bounds(x[:nr], y)
            width = best_hi - best_lo
            if lo > best_lo:
                best_lo = lo
            if hi < best_hi:
                best_hi, best_rho = hi, dens
            stall = stall + 1 if best_hi - best_lo > 0.5 * width else 0
            if best_hi - best_lo <= gap_tol * max(1.0, best_hi) or stall >= 4:
                break
            gf = p * mu * rho ** (p - 1.0)
            hf = p * (p - 1.0) * mu * rho ** (p - 2.0)
            r_d = Ct @ y
            r_d[:nr] += gf
            r_p = C @ x + s - b
            gap = float(y @ s) / self.m
            D = y / s
            M = (Ct @ sp.diags(D) @ C + sp.diags(np.concatenate([hf, np.zeros(len(x) - nr)]))).tocsc()
            lu = splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})

            def direction(r_c):
                dx = lu.solve(-r_d - Ct @ ((y * r_p - r_c) / s))
                ds = -r_p - C @ dx
                return dx, ds, (-r_c - y * ds) / s

            # Mehrotra predictor-corrector
            dx, ds, dy = direction(y * s)
            a_aff = _max_step(((s, ds), (y, dy)))
            mu_aff = float((s + a_aff * ds) @ (y + a_aff * dy)) / self.m
            sigma = min(1.0, (mu_aff / gap) ** 3) if gap > 0 else 0.0
            dx, ds, dy = direction(y * s + ds * dy - sigma * gap)
            alpha = _max_step(((s, ds), (y, dy)), 0.995)
            x, s, y = x + alpha * dx, s + alpha * ds, y + alpha * dy
        return best_lo, best_hi, best_rho, it


def _max_step(pairs, frac: float = 1.0) -> float:
    alpha = 1.0
    for v, dv in pairs:
        neg = dv < 0
        if neg.any():
            alpha = min(alpha, frac * float(np.min(-v[neg] / dv[neg])))
    return alpha


def _reachable(graph: sp.csr_matrix, seeds: np.ndarray) -> np.ndarray:
    n = graph.shape[0]
    # a virtual root joined to every seed gives a single traversal
    root = sp.csr_matrix((np.ones(len(seeds)), (np.zeros(len(seeds), dtype=int), seeds)), shape=(1, n))
    ext = sp.bmat([[graph, sp.csr_matrix((n, 1))], [root, sp.csr_matrix((1, 1))]]).tocsr()
    order = breadth_first_order(ext, n, directed=True, return_predecessors=False)
    seen = np.zeros(n + 1, dtype=bool)
    seen[order] = True
    return seen[:n]


def _no_paths_result(p, value, rho, iterations=0):
    return ModulusResult(
        value=value,
        optimal_density=None if rho is None else Density(rho),
        iterations=iterations,
        certified_gap=0.0,
        lower_bound=value,
        upper_bound=value,
        p=p,
    )


def compute_p_modulus(
    space: DiscreteSpace,
    family: PathFamily,
    p: float = 2.0,
    tol: float = DEFAULT_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
    max_rounds: int | None = None,
    paths_per_round: int = 64,
    method: str = "auto",
) -> ModulusResult:
    """p-modulus of a path family.

    ``method="paths"`` is constraint generation with shortest-path separation.
    ``method="potential"`` (connecting families only) solves the equivalent
    node-potential program in one sparse interior point run; ``"auto"`` picks it
    for connecting families spanning more than ``POTENTIAL_THRESHOLD`` nodes.
    Both report certified lower and upper bounds.
    """
    if not p > 1:
        raise ValueError(f"p must be > 1 (got {p}); p = 1 and p = inf are not supported")
    if not math.isfinite(p):
        raise ValueError("p = inf is not supported")
    n = space.n_nodes
    sep = _Separator(space, family)
    if family.is_empty():
        return _no_paths_result(p, 0.0, np.zeros(n))
    if sep.has_zero_length_path():
        res = _no_paths_result(p, INFINITE, None)
        res.min_path_length = 0.0
        return res
    if method not in ("auto", "paths", "potential"):
        raise ValueError(f"unknown method {method!r}")
    if method == "potential" and family.is_explicit:
        raise ValueError("the potential method needs a connecting family")
    if method == "auto":
        big = not family.is_explicit and len(family.sources | family.targets | family.through) > POTENTIAL_THRESHOLD
        method = "potential" if big else "paths"
    if method == "potential":
        return _potential_modulus(space, sep, p, tol, kkt_tol, paths_per_round)
    if max_rounds is None:
        max_rounds = 10 * n
    mu = space.measure
    rho = np.zeros(n)
    active: list[tuple[int, ...]] = []
    index: set[tuple[int, ...]] = set()
    rows: list[dict[int, float]] = []
    lam = np.zeros(0)
    lower = 0.0
    min_len = 0.0
    for rnd in range(1, max_rounds + 1):
        min_len, best_path, violated = sep.search(rho, 1.0 - tol, paths_per_round)
        if best_path is None:
            # family has no realizable path at all (e.g. E and F disconnected)
            return _no_paths_result(p, 0.0, np.zeros(n), rnd)
        if min_len >= 1.0 - tol:
            break
        added = 0
        for path in violated:
            if path not in index:
                index.add(path)
                active.append(path)
                rows.append(path_coefficients(space, path))
                added += 1
        if added == 0:
            raise SolverError("separation returned only known paths; restricted solve inaccurate", (lower, None))
        A = sp.csr_matrix(
            (
                [a for r in rows for a in r.values()],
                ([k for k, r in enumerate(rows) for _ in r], [v for r in rows for v in r.keys()]),
            ),
            shape=(len(rows), n),
        )
        lam = np.concatenate([lam, np.zeros(len(rows) - len(lam))])
        dual = _DualProblem(A, mu, p)
        gap_tol = 1e-3 * tol
        lam, rho, resid, gap, _ = dual.solve(lam, kkt_tol, gap_tol)
        if not (resid < kkt_tol or gap <= gap_tol):
            lam, rho, resid, gap, _ = dual.solve(np.zeros(len(rows)), kkt_tol, gap_tol)
            if not (resid < kkt_tol or gap <= gap_tol):
                raise SolverError(f"restricted dual did not converge (kkt residual {resid:.2e}, gap {gap:.2e})", (lower, None))
        lower = -dual.value(lam)
        log.debug("round %d: %d paths, dual %.12g, kkt %.2e", rnd, len(active), lower, resid)
    else:
        min_len, _, _ = sep.search(rho, -math.inf, 0)
        energy = float(np.sum(mu * rho**p))
        upper = energy / min_len**p if min_len**p > 0 else None
        raise SolverError(f"no convergence within {max_rounds} rounds (min length {min_len:.3g})", (lower, upper))
    # rescale so the shortest path has length exactly one: rho is then admissible
    # and its energy is the certified upper bound
    rho = rho / min_len
    upper = float(np.sum(mu * rho**p))
    if not upper - lower <= 10 * tol * max(1.0, upper):
        raise SolverError(f"certified gap {upper - lower:.3g} too large", (lower, upper))
    return ModulusResult(
        value=upper,
        optimal_density=Density(rho),
        active_paths=active,
        iterations=rnd,
        certified_gap=max(upper - lower, 0.0),
        lower_bound=lower,
        upper_bound=upper,
        min_path_length=1.0,
        p=p,
    )


def _potential_modulus(space, sep, p, tol, gap_tol, max_paths) -> ModulusResult:
    prog = _PotentialProgram(space, sep, p)
    n = space.n_nodes
    if prog.empty:
        return _no_paths_result(p, 0.0, np.zeros(n))
    lower, upper, rho, iters = prog.solve(gap_tol)
    if not upper - lower <= tol * max(1.0, upper):
        raise SolverError(f"interior point stalled with gap {upper - lower:.3g}", (lower, upper))
    min_len, _, tight = sep.search(rho, 1.0 + tol, max_paths)
    return ModulusResult(
        value=float(np.sum(space.measure * rho**p)),
        optimal_density=Density(rho),
        active_paths=tight,
        iterations=iters,
        certified_gap=max(upper - lower, 0.0),
        lower_bound=lower,
        upper_bound=upper,
        min_path_length=min_len,
        p=p,
    )


# --------------------------------------------------------------------------- oracles


def enumerate_family_paths(space: DiscreteSpace, family: PathFamily, max_paths: int = 20000) -> list[tuple[int, ...]]:
    """All simple paths of a connecting family (small instances only)."""
    if family.is_explicit:
        return list(family.paths)
    E, F, G = family.sources, family.targets, family.through
    out: list[tuple[int, ...]] = []
    for s in sorted(E):
        if s in F:
            out.append((s,))
        stack = [(s, (s,))]
        while stack:
            v, path = stack.pop()
            if v != s and v not in G:
                continue
            for w in sorted(space.neighbors(v).tolist(), reverse=True):
                if w in path:
                    continue
                if w in F:
                    out.append(path + (w,))
                    if len(out) > max_paths:
                        raise PreconditionError(f"more than {max_paths} simple paths; instance above brute-force cap")
                if w in G:
                    stack.append((w, path + (w,)))
    return out


def brute_force_modulus(
    space: DiscreteSpace,
    family: PathFamily,
    p: float = 2.0,
    tol: float = DEFAULT_TOL,
    node_cap: int = 40,
    path_cap: int = 20000,
) -> ModulusResult:
    """Full convex program with every path constraint materialized, via an interior-point solver."""
    import cvxpy as cp

    if not p > 1:
        raise ValueError("p must be > 1")
    if space.n_nodes > node_cap:
        raise PreconditionError(f"{space.n_nodes} nodes exceeds brute-force cap {node_cap}")
    paths = enumerate_family_paths(space, family, path_cap)
    n = space.n_nodes
    if not paths:
        return _no_paths_result(p, 0.0, np.zeros(n))
    if any(len(pth) == 1 for pth in paths):
        return _no_paths_result(p, INFINITE, None)
    A = _coefficient_matrix(space, paths).toarray()
    rho = cp.Variable(n, nonneg=True)
    objective = cp.Minimize(cp.sum(cp.multiply(space.measure, cp.power(rho, p))))
    prob = cp.Problem(objective, [A @ rho >= 1])
    with warnings.catch_warnings():
        # tolerances sit at the edge of double precision; the status is checked below
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"brute-force solve failed: {prob.status}")
    if prob.status == "optimal_inaccurate":
        log.debug("brute-force solve reached reduced accuracy")
    r = np.maximum(np.asarray(rho.value, dtype=float), 0.0)
    min_len = float((A @ r).min())
    energy = float(np.sum(space.measure * r**p))
    return ModulusResult(
        value=energy,
        optimal_density=Density(r),
        active_paths=paths,
        iterations=1,
        certified_gap=abs(energy / min_len**p - energy),
        lower_bound=energy,
        upper_bound=energy / min_len**p,
        min_path_length=min_len,
        p=p,
    )


def conductance_oracle(space: DiscreteSpace, E: Iterable[int], F: Iterable[int], G: Iterable[int] | None = None) -> float:
    """Effective conductance between E (potential 1) and F (potential 0).

    Only nodes in ``E | F | G`` participate (all nodes when ``G`` is None) and
    edges use ``space.conductance``.
    """
    E = frozenset(int(v) for v in E)
    F = frozenset(int(v) for v in F)
    if not E or not F:
        raise ValueError("E and F must be nonempty")
    if E & F:
        raise ValueError("E and F must be disjoint")
    n = space.n_nodes
    allowed = np.zeros(n, dtype=bool)
    if G is None:
        allowed[:] = True
    else:
        allowed[list(frozenset(int(v) for v in G) | E | F)] = True
    i, j = space.edges[:, 0], space.edges[:, 1]
    keep = allowed[i] & allowed[j]
    isE = np.zeros(n, dtype=bool)
    isF = np.zeros(n, dtype=bool)
    isE[list(E)] = True
    isF[list(F)] = True
    keep &= ~((isE[i] & isE[j]) | (isF[i] & isF[j]))
    i, j, c = i[keep], j[keep], space.conductance[keep]
    W = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()
    # restrict to free nodes connected to both boundary sets
    from scipy.sparse.csgraph import connected_components

    _, labels = connected_components(W, directed=False)
    good_labels = set(labels[list(E)]) & set(labels[list(F)])
    if not good_labels:
        return 0.0
    in_good = np.isin(labels, list(good_labels))
    free = np.nonzero(allowed & in_good & ~isE & ~isF)[0]
    u = np.zeros(n)
    u[list(E)] = 1.0
    if len(free):
        deg = np.asarray(W.sum(axis=1)).ravel()
        L = sp.diags(deg) - W
        Lff = L[free][:, free].tocsc()
        rhs = -(L[free] @ u)
        u[free] = spsolve(Lff, rhs) if len(free) > 1 else rhs / Lff.toarray()[0, 0]
    e_idx = np.array(sorted(E))
    flow = W[e_idx] @ (1.0 - u)
    return float(np.sum(flow) - 0.0)


# --------------------------------------------------------------------------- structure checks


def _has_subpath(path: tuple[int, ...], family2: set[tuple[int, ...]]) -> bool:
    n = len(path)
    for a in range(n):
        for b in range(a + 1, n + 1):
            sub = path[a:b]
            if sub in family2 or sub[::-1] in family2:
                return True
    return False


@dataclass
class MinorizationReport:
    m1: ModulusResult
    m2: ModulusResult
    holds: bool
    slack: float


def minorization_test(
    space: DiscreteSpace,
    family1: PathFamily,
    family2: PathFamily,
    p: float = 2.0,
    tol: float = DEFAULT_TOL,
    by_construction: bool = False,
) -> MinorizationReport:
    """Check M_p(family1) <= M_p(family2) + 2 tol when every path of family1 restricts to one of family2."""
    if family1.is_explicit and family2.is_explicit:
        f2 = set(family2.paths)
        for path in family1.paths:
            if not _has_subpath(path, f2):
                raise PreconditionError(f"path {path} has no subpath in the minorizing family")
    elif not by_construction:
        raise PreconditionError("minorization of connecting families must be asserted by construction")
    m1 = compute_p_modulus(space, family1, p, tol)
    m2 = compute_p_modulus(space, family2, p, tol)
    if m2.is_infinite:
        return MinorizationReport(m1, m2, True, math.inf)
    if m1.is_infinite:
        return MinorizationReport(m1, m2, False, -math.inf)
    slack = m2.value + 2 * tol - m1.value
    return MinorizationReport(m1, m2, slack >= 0, slack)


def ring_family(space: DiscreteSpace, ring, tol: float | None = None) -> PathFamily:
    """Gamma(S(x0, r1), S(x0, r2), A(x0, r1, r2)) with one-sided boundary shells."""
    from .space import ring_shells, ring_subset

    s1, s2 = ring_shells(space, ring, tol)
    return PathFamily.connecting(s1, s2, ring_subset(space, ring))


def inner_boundary(space: DiscreteSpace, A: Iterable[int]) -> frozenset[int]:
    """Nodes of A with a neighbour outside A."""
    A = frozenset(int(v) for v in A)
    inA = np.zeros(space.n_nodes, dtype=bool)
    inA[list(A)] = True
    i, j = space.edges[:, 0], space.edges[:, 1]
    cross = inA[i] != inA[j]
    shell = set(i[cross & inA[i]].tolist()) | set(j[cross & inA[j]].tolist())
    return frozenset(shell)


def capacity_family(space: DiscreteSpace, condenser: Condenser) -> PathFamily:
    """Paths from C to the inner node-boundary of A, staying in A."""
    shell = inner_boundary(space, condenser.A)
    return PathFamily.connecting(condenser.C, shell, condenser.A)


def condenser_capacity(space: DiscreteSpace, condenser: Condenser, p: float = 2.0, tol: float = DEFAULT_TOL) -> ModulusResult:
    return compute_p_modulus(space, capacity_family(space, condenser), p, tol)


def base_diameter(space: DiscreteSpace, nodes: Iterable[int]) -> float:
    idx = sorted(set(int(v) for v in nodes))
    if len(idx) < 2:
        return 0.0
    return float(space.pairwise(idx, idx).max())


@dataclass
class FloorReport:
    bound: float
    observed: float
    ratio: float
    result: ModulusResult


def pr2_floor(space: DiscreteSpace, E, F, R: float, p: float = 2.0, alpha: float | None = None, center=None, tol: float = DEFAULT_TOL) -> FloorReport:
    """Observed M_p(Gamma(E, F, X)) against min(diam E, diam F) / R^(1+p-alpha).

    ``ratio`` is bound/observed, i.e. the smallest constant C for which the
    lower estimate holds on this instance.
    """
    alpha = space.dimension_alpha if alpha is None else alpha
    E = frozenset(int(v) for v in E)
    F = frozenset(int(v) for v in F)
    if not E or not F:
        raise PreconditionError("E and F must be nonempty")
    if E & F:
        raise PreconditionError("E and F must be disjoint")
    if not (alpha - 1 < p <= alpha):
        raise PreconditionError(f"need alpha-1 < p <= alpha, got p={p}, alpha={alpha}")
    for name, S in (("E", E), ("F", F)):
        if not space.is_connected(S):
            raise PreconditionError(f"{name} is not connected")
    if center is not None:
        d = space.distances_from(center)
        if np.any(d[list(E | F)] >= R):
            raise PreconditionError("E and F must lie inside B(x0, R)")
    res = compute_p_modulus(space, PathFamily.connecting(E, F, range(space.n_nodes)), p, tol)
    bound = min(base_diameter(space, E), base_diameter(space, F)) / R ** (1 + p - alpha)
    observed = float(res.value)
    if not observed > 0:
        raise SolverError("observed modulus is not positive")
    return FloorReport(bound, observed, bound / observed, res)


@dataclass
class CapacityFloorReport:
    capacities: list[float]
    skipped: list[tuple[int, str]]
    delta: float
    all_positive: bool


def capacity_floor_check(space: DiscreteSpace, F, params, a: float, p: float, trials: Sequence[Iterable[int]], tol: float = DEFAULT_TOL) -> CapacityFloorReport:
    """cap_p(X \\ F, C) for each trial continuum C of chordal diameter >= a."""

    F = frozenset(int(v) for v in F)
    A = frozenset(range(space.n_nodes)) - F
    caps: list[float] = []
    skipped: list[tuple[int, str]] = []
    for k, C in enumerate(trials):
        C = frozenset(int(v) for v in C)
        if not C or not space.is_connected(C):
            skipped.append((k, "not connected"))
            continue
        if C & F:
            skipped.append((k, "meets F"))
            continue
        if chordal_diameter(C, params, space).value < a:
            skipped.append((k, "chordal diameter below a"))
            continue
        res = condenser_capacity(space, Condenser(A, C), p, tol)
        caps.append(math.inf if res.is_infinite else float(res.value))
    if skipped:
        log.info("capacity_floor_check skipped trials: %s", skipped)
    delta = min(caps) if caps else math.nan
    return CapacityFloorReport(caps, skipped, delta, bool(caps) and all(c > 0 for c in caps))
