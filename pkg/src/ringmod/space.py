"""Discrete metric measure spaces: lattice discretizations and small synthetic graphs.

A :class:`DiscreteSpace` is a finite graph whose nodes carry a measure and whose
pairwise distance ``d`` is fixed at build time, either Euclidean distance between
node coordinates or a stored distance table (graph shortest-path metric or an
arbitrary user table).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

__all__ = [
    "BuildError",
    "DiscreteSpace",
    "DomainSpec",
    "Region",
    "RingSpec",
    "RegularityReport",
    "build_grid_domain",
    "graph_space",
    "table_space",
    "cycle_graph",
    "ring_subset",
    "sphere_nodes",
    "ring_shells",
    "closed_ball",
    "ahlfors_probe",
    "write_space_records",
    "read_space_records",
    "STENCILS",
]


class BuildError(ValueError):
    """Raised when a space description does not produce a usable space."""


# half-stencils: one vector per +/- pair
STENCILS: dict[tuple[int, int], tuple[tuple[int, ...], ...]] = {
    (2, 4): ((1, 0), (0, 1)),
    (2, 8): ((1, 0), (0, 1), (1, 1), (1, -1)),
    (2, 16): ((1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)),
    (3, 6): ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
}


@dataclass(frozen=True)
class DiscreteSpace:
    """Finite weighted graph standing in for a metric measure space.

    Nodes are the integers ``0..n-1``.  ``coords`` is ``None`` for purely
    combinatorial spaces, in which case ``distance_table`` must be given.
    ``conductance`` holds per-edge weights used by the Laplace oracle.
    """

    edges: np.ndarray
    edge_length: np.ndarray
    measure: np.ndarray
    coords: np.ndarray | None = None
    distance_table: np.ndarray | None = None
    dimension_alpha: float = 2.0
    mesh_step: float | None = None
    conductance: np.ndarray | None = None
    name: str = "space"

    def __post_init__(self):
        n = len(self.measure)
        if n == 0:
            raise BuildError("space has no nodes")
        if np.any(self.measure <= 0):
            raise BuildError("node measures must be positive")
        if len(self.edges):
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise BuildError("self-loops are not allowed")
            if np.any(self.edge_length <= 0):
                raise BuildError("edge lengths must be positive")
        if self.coords is None and self.distance_table is None:
            raise BuildError("need coordinates or a distance table")
        if self.conductance is None:
            mu_bar = 0.5 * (self.measure[self.edges[:, 0]] + self.measure[self.edges[:, 1]])
            object.__setattr__(self, "conductance", mu_bar / self.edge_length**2)

    @property
    def n_nodes(self) -> int:
        return len(self.measure)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def metric(self) -> str:
        return "euclidean" if self.distance_table is None else "table"

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric CSR matrix of edge lengths."""
        n = self.n_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        mat = sp.coo_matrix(
            (np.concatenate([self.edge_length, self.edge_length]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n),
        )
        return mat.tocsr()

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(min(u, v)), int(max(u, v))): k for k, (u, v) in enumerate(self.edges)}

    @property
    def max_edge_length(self) -> float:
        return float(self.edge_length.max()) if self.n_edges else 0.0

    def check_node(self, v) -> int:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)):
            raise ValueError(f"unknown point identifier {v!r}")
        if not 0 <= int(v) < self.n_nodes:
            raise ValueError(f"unknown point identifier {v!r}")
        return int(v)

    def neighbors(self, v: int) -> np.ndarray:
        row = self.adjacency
        return row.indices[row.indptr[v] : row.indptr[v + 1]]

    def edge_length_between(self, u: int, v: int) -> float:
        k = self.edge_index.get((min(u, v), max(u, v)))
        if k is None:
            raise ValueError(f"nodes {u} and {v} are not adjacent")
        return float(self.edge_length[k])

    def distance(self, u: int, v: int) -> float:
        u, v = self.check_node(u), self.check_node(v)
        if self.distance_table is not None:
            return float(self.distance_table[u, v])
        return float(np.linalg.norm(self.coords[u] - self.coords[v]))

    def distances_from(self, point) -> np.ndarray:
        """Distances from ``point`` (a node id or, for Euclidean spaces, a coordinate) to all nodes."""
        if isinstance(point, (int, np.integer)) and not isinstance(point, (bool, np.bool_)):
            v = self.check_node(point)
            if self.distance_table is not None:
                return np.asarray(self.distance_table[v], dtype=float)
            return np.linalg.norm(self.coords - self.coords[v], axis=1)
        if self.coords is None:
            raise ValueError(f"unknown point identifier {point!r}")
        x = np.asarray(point, dtype=float)
        if x.shape != (self.coords.shape[1],):
            raise ValueError(f"point {point!r} has wrong dimension")
        return np.linalg.norm(self.coords - x, axis=1)

    def pairwise(self, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if self.distance_table is not None:
            return self.distance_table[np.ix_(a, b)]
        diff = self.coords[a][:, None, :] - self.coords[b][None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def induced_components(self, nodes: Iterable[int]) -> list[frozenset[int]]:
        """Connected components of the subgraph induced by ``nodes``."""
        idx = np.array(sorted(set(int(v) for v in nodes)), dtype=int)
        if len(idx) == 0:
            return []
        sub = self.adjacency[idx][:, idx]
        _, labels = connected_components(sub, directed=False)
        comps: dict[int, list[int]] = {}
        for v, lab in zip(idx, labels):
            comps.setdefault(int(lab), []).append(int(v))
        return [frozenset(c) for c in sorted(comps.values(), key=min)]

    def is_connected(self, nodes: Iterable[int]) -> bool:
        return len(self.induced_components(nodes)) == 1

    def nearest_node(self, point) -> int:
        d = self.distances_from(point)
        return int(np.argmin(d))


@dataclass(frozen=True)
class Region:
    """Disk/ball or axis box used to shape or carve a lattice domain."""

    kind: str
    center: tuple[float, ...] = ()
    radius: float = 0.0
    inner_radius: float = 0.0
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        if self.kind in ("disk", "ball", "annulus"):
            r = np.linalg.norm(pts - np.asarray(self.center, dtype=float), axis=1)
            inside = r <= self.radius + tol
            if self.kind == "annulus":
                inside &= r >= self.inner_radius - tol
            return inside
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
        raise BuildError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class DomainSpec:
    """Lattice domain description: bounding box, mesh step, optional shape and holes."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    step: float
    shape: Region | None = None
    puncture: tuple[float, ...] | None = None
    exclude: tuple[Region, ...] = ()
    stencil: int | None = None
    alpha: float | None = None


def build_grid_domain(spec: DomainSpec) -> DiscreteSpace:
    """Lattice points of the domain joined by stencil edges; measure ``h**n`` per node.

    The default stencil is nearest-neighbour (4 in the plane, 6 in space).  The
    8- and 16-neighbour planar stencils make lattice path lengths approximate
    Euclidean lengths much more closely.
    """
    lo = np.asarray(spec.lower, dtype=float)
    hi = np.asarray(spec.upper, dtype=float)
    h = float(spec.step)
    if lo.shape != hi.shape or lo.ndim != 1 or len(lo) not in (2, 3):
        raise BuildError("box must be 2- or 3-dimensional")
    if not h > 0:
        raise BuildError("mesh step must be positive")
    if np.any(hi - lo <= 0):
        raise BuildError("degenerate bounding box")
    dim = len(lo)
    stencil = spec.stencil or (4 if dim == 2 else 6)
    if (dim, stencil) not in STENCILS:
        raise BuildError(f"unsupported stencil {stencil} in dimension {dim}")

    counts = np.floor((hi - lo) / h + 1e-9).astype(int) + 1
    grids = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    ijk = np.stack([g.ravel() for g in grids], axis=1)
    pts = lo + ijk * h
    keep = np.ones(len(pts), dtype=bool)
    if spec.shape is not None:
        keep &= spec.shape.contains(pts)
    for reg in spec.exclude:
        keep &= ~reg.contains(pts)
    if spec.puncture is not None:
        keep &= np.linalg.norm(pts - np.asarray(spec.puncture, dtype=float), axis=1) > 1e-9 * h
    if not keep.any():
        raise BuildError("domain contains no lattice points")

    lookup = -np.ones(counts, dtype=np.int64)
    kept = ijk[keep]
    lookup[tuple(kept.T)] = np.arange(len(kept))
    coords = pts[keep]

    vecs = STENCILS[(dim, stencil)]
    kappa = dim / len(vecs)
    e_list, len_list = [], []
    for vec in vecs:
        v = np.asarray(vec)
        tgt = kept + v
        ok = np.all((tgt >= 0) & (tgt < counts), axis=1)
        src_idx = np.nonzero(ok)[0]
        tgt_ids = lookup[tuple(tgt[ok].T)]
        good = tgt_ids >= 0
        e_list.append(np.stack([src_idx[good], tgt_ids[good]], axis=1))
        len_list.append(np.full(good.sum(), h * float(np.linalg.norm(v))))
    edges = np.concatenate(e_list).astype(np.int64) if e_list else np.zeros((0, 2), dtype=np.int64)
    edge_length = np.concatenate(len_list)
    measure = np.full(len(coords), h**dim)
    conductance = kappa * h**dim / edge_length**2
    return DiscreteSpace(
        edges=edges,
        edge_length=edge_length,
        measure=measure,
        coords=coords,
        dimension_alpha=float(spec.alpha if spec.alpha is not None else dim),
        mesh_step=h,
        conductance=conductance,
        name="grid",
    )


def graph_space(
    n: int,
    edges: Sequence[tuple[int, int]],
    lengths: Sequence[float] | None = None,
    measure: Sequence[float] | None = None,
    alpha: float = 2.0,
) -> DiscreteSpace:
    """Abstract graph with the shortest-path metric."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(e)) if lengths is None else np.asarray(lengths, dtype=float)
    mu = np.ones(n) if measure is None else np.asarray(measure, dtype=float)
    adj = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n))
    table = shortest_path(adj.tocsr(), directed=False)
    if np.isinf(table).any():
        raise BuildError("graph is disconnected; shortest-path metric undefined")
    return DiscreteSpace(edges=e, edge_length=w, measure=mu, distance_table=table, dimension_alpha=alpha, name="graph")


def table_space(
    table: Sequence[Sequence[float]],
    edges: Sequence[tuple[int, int]] = (),
    measure: Sequence[float] | None = None,
    alpha: float = 2.0,
) -> DiscreteSpace:
    """Space defined by an explicit distance table; edges (if any) get the table lengths."""
    t = np.asarray(table, dtype=float)
    n = t.shape[0]
    if t.shape != (n, n):
        raise BuildError("distance table must be square")
    if not np.allclose(t, t.T) or np.any(np.diag(t) != 0) or np.any(t[~np.eye(n, dtype=bool)] <= 0):
        raise BuildError("distance table must be symmetric with zero diagonal and positive off-diagonal")
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = t[e[:, 0], e[:, 1]] if len(e) else np.zeros(0)
    mu = np.ones(n) if measure is None else np.asarray(measure, dtype=float)
    return DiscreteSpace(edges=e, edge_length=w, measure=mu, distance_table=t, dimension_alpha=alpha, name="table")


def cycle_graph(n: int, side: float = 1.0) -> DiscreteSpace:
    edges = [(i, (i + 1) % n) for i in range(n)]
    return graph_space(n, edges, [side] * n)


@dataclass(frozen=True)
class RingSpec:
    center: object
    r1: float
    r2: float

    def __post_init__(self):
        if not (0 < self.r1 < self.r2 < math.inf):
            raise ValueError(f"invalid ring radii r1={self.r1}, r2={self.r2}")


def ring_subset(space: DiscreteSpace, ring: RingSpec) -> frozenset[int]:
    d = space.distances_from(ring.center)
    return frozenset(np.nonzero((d > ring.r1) & (d < ring.r2))[0].tolist())


def closed_ball(space: DiscreteSpace, center, r: float) -> frozenset[int]:
    d = space.distances_from(center)
    return frozenset(np.nonzero(d <= r)[0].tolist())


def sphere_nodes(space: DiscreteSpace, center, r: float, tol: float | None = None, side: str = "both") -> frozenset[int]:
    """Discrete sphere: nodes within ``tol`` of distance ``r`` from ``center``.

    ``side="inner"`` keeps only ``r - tol <= d <= r``; ``side="outer"`` only
    ``r <= d <= r + tol``.  An empty result is legal but warns.
    """
    if tol is None:
        if space.mesh_step is None:
            raise ValueError("tol required for spaces without a mesh step")
        tol = 0.5 * space.mesh_step
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = space.distances_from(center)
    eps = 1e-12 * max(1.0, r)
    if side == "both":
        mask = np.abs(d - r) <= tol + eps
    elif side == "inner":
        mask = (d <= r + eps) & (d >= r - tol - eps)
    elif side == "outer":
        mask = (d >= r - eps) & (d <= r + tol + eps)
    else:
        raise ValueError(f"unknown side {side!r}")
    out = frozenset(np.nonzero(mask)[0].tolist())
    if not out:
        warnings.warn(f"empty discrete sphere at r={r} with tol={tol}; tolerance too thin", stacklevel=2)
    return out


def ring_shells(space: DiscreteSpace, ring: RingSpec, tol: float | None = None) -> tuple[frozenset[int], frozenset[int]]:
    """Boundary shells just outside the open ring: inner side of S(r1), outer side of S(r2).

    Thickness defaults to the longest edge so that any edge path leaving the
    ring through a sphere lands in the corresponding shell.
    """
    if tol is None:
        tol = space.max_edge_length
    if tol >= ring.r2 - ring.r1:
        warnings.warn(f"shell tolerance {tol} exceeds ring width {ring.r2 - ring.r1}; shells overlap", stacklevel=2)
    s1 = sphere_nodes(space, ring.center, ring.r1, tol, side="inner")
    s2 = sphere_nodes(space, ring.center, ring.r2, tol, side="outer")
    return s1, s2


@dataclass
class RegularityReport:
    radii: np.ndarray
    ball_measure: np.ndarray
    ratios: np.ndarray
    constant: float
    min_ratio: float
    max_ratio: float
    doubling_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))


def ahlfors_probe(space: DiscreteSpace, x0, radii: Sequence[float], alpha: float | None = None) -> RegularityReport:
    """Ball-measure ratios mu(B(x0,R))/R^alpha and doubling ratios mu(B(2r))/mu(B(r))."""
    alpha = space.dimension_alpha if alpha is None else alpha
    r = np.asarray(radii, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radii must be positive")
    d = space.distances_from(x0)
    mass = np.array([space.measure[d < R].sum() for R in r])
    if np.any(mass <= 0):
        # a punctured centre with R below the mesh step; fall back to the nearest node
        mass = np.where(mass > 0, mass, space.measure[np.argmin(d)])
    ratios = mass / r**alpha
    mass2 = np.array([space.measure[d < 2 * R].sum() for R in r])
    doubling = mass2 / mass
    const = float(max(ratios.max(), 1.0 / ratios.min(), 1.0))
    return RegularityReport(r, mass, ratios, const, float(ratios.min()), float(ratios.max()), doubling)


def write_space_records(space: DiscreteSpace, path) -> None:
    """One JSON object per line: a header, then node rows, then edge rows."""
    with open(path, "w") as fh:
        header = {
            "kind": "space",
            "name": space.name,
            "n_nodes": space.n_nodes,
            "n_edges": space.n_edges,
            "dimension_alpha": space.dimension_alpha,
            "mesh_step": space.mesh_step,
            "metric": space.metric,
        }
        fh.write(json.dumps(header) + "\n")
        for v in range(space.n_nodes):
            rec = {"kind": "node", "id": v, "measure": float(space.measure[v])}
            if space.coords is not None:
                rec["coords"] = [float(c) for c in space.coords[v]]
            if space.distance_table is not None:
                rec["distances"] = [float(c) for c in space.distance_table[v]]
            fh.write(json.dumps(rec) + "\n")
        for k, (u, v) in enumerate(space.edges):
            rec = {
                "kind": "edge",
                "u": int(u),
                "v": int(v),
                "length": float(space.edge_length[k]),
                "conductance": float(space.conductance[k]),
            }
            fh.write(json.dumps(rec) + "\n")


def read_space_records(path) -> DiscreteSpace:
    header, nodes, edges = None, [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "space":
                header = rec
            elif kind == "node":
                nodes.append(rec)
            elif kind == "edge":
                edges.append(rec)
            else:
                raise BuildError(f"unknown record kind {kind!r}")
    if header is None:
        raise BuildError("missing space header record")
    nodes.sort(key=lambda r: r["id"])
    measure = np.array([r["measure"] for r in nodes], dtype=float)
    coords = np.array([r["coords"] for r in nodes], dtype=float) if nodes and "coords" in nodes[0] else None
    table = np.array([r["distances"] for r in nodes], dtype=float) if nodes and "distances" in nodes[0] else None
    e = np.array([[r["u"], r["v"]] for r in edges], dtype=np.int64).reshape(-1, 2)
    return DiscreteSpace(
        edges=e,
        edge_length=np.array([r["length"] for r in edges], dtype=float),
        measure=measure,
        coords=coords,
        distance_table=table,
        dimension_alpha=header["dimension_alpha"],
        mesh_step=header["mesh_step"],
        conductance=np.array([r["conductance"] for r in edges], dtype=float),
        name=header.get("name", "space"),
    )


def lattice_box(n_per_side: int, step: float = 1.0, dim: int = 2, stencil: int | None = None) -> DiscreteSpace:
    """Convenience: an ``n x n`` (or ``n^3``) lattice block anchored at the origin."""
    upper = tuple([step * (n_per_side - 1)] * dim)
    return build_grid_domain(DomainSpec(lower=(0.0,) * dim, upper=upper, step=step, stencil=stencil))


def disk_domain(radius: float, step: float, center=(0.0, 0.0), puncture: bool = False, stencil: int | None = None) -> DiscreteSpace:
    """Lattice points of the closed disk, aligned so that the centre is a lattice point."""
    c = tuple(float(x) for x in center)
    k = math.floor(radius / step + 1e-9)
    lo = tuple(x - k * step for x in c)
    hi = tuple(x + k * step for x in c)
    return build_grid_domain(
        DomainSpec(
            lower=lo,
            upper=hi,
            step=step,
            shape=Region("disk", center=c, radius=radius),
            puncture=c if puncture else None,
            stencil=stencil,
        )
    )


def log_polar_domain(
    r_min: float, r_max: float, n_theta: int, center=(0.0, 0.0), stencil: int = 16
) -> DiscreteSpace:
    """Planar annular lattice uniform in (log r, theta), periodic in theta.

    Node (i, j) sits at radius r_min * exp(i * delta), angle j * delta with
    delta = 2 pi / n_theta.  Edges follow the planar stencil in index space with
    Euclidean chord lengths; node measure is the cell area r^2 delta^2.  The
    lattice is conformally a uniform square lattice, so it resolves every scale
    between r_min and r_max equally well.
    """
    if not 0 < r_min < r_max:
        raise BuildError("need 0 < r_min < r_max")
    if n_theta < 8:
        raise BuildError("need at least 8 angular nodes")
    if (2, stencil) not in STENCILS:
        raise BuildError(f"unsupported stencil {stencil}")
    delta = 2 * math.pi / n_theta
    n_s = int(math.ceil(math.log(r_max / r_min) / delta - 1e-9)) + 1
    ii, jj = np.meshgrid(np.arange(n_s), np.arange(n_theta), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    r = r_min * np.exp(ii * delta)
    th = jj * delta
    c = np.asarray(center, dtype=float)
    coords = np.stack([c[0] + r * np.cos(th), c[1] + r * np.sin(th)], axis=1)
    vecs = STENCILS[(2, stencil)]
    kappa = 2.0 / len(vecs)
    e_list, cond = [], []
    for a, b in vecs:
        ok = (ii + a >= 0) & (ii + a < n_s)
        src = np.flatnonzero(ok)
        dst = (ii[ok] + a) * n_theta + (jj[ok] + b) % n_theta
        e_list.append(np.stack([src, dst], axis=1))
        cond.append(np.full(len(src), kappa / float(a * a + b * b)))
    edges = np.concatenate(e_list).astype(np.int64)
    length = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    return DiscreteSpace(
        edges=edges,
        edge_length=length,
        measure=(r * delta) ** 2,
        coords=coords,
        dimension_alpha=2.0,
        mesh_step=float(length.max()),
        conductance=np.concatenate(cond),
        name="log-polar",
    )


__all__ += ["lattice_box", "disk_domain", "log_polar_domain"]
