"""Numerical demonstrations at an isolated singularity, measured chordally.

Maps are evaluated pointwise on circles ("shells") |z - zeta0| = r for a
decreasing list of approach radii.  Distances in the target are taken in the
chordal metric of the extended plane, so the point at infinity is an ordinary
target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .chordal import INFINITY, ChordalParams, PreconditionError, _Infinity, sphere_embedding
from .qmap import DiscreteMap

log = logging.getLogger(__name__)

__all__ = [
    "SingularityExperiment",
    "TargetResult",
    "ClusterReport",
    "ExtensionReport",
    "OmittedReport",
    "cluster_density_scan",
    "extension_check",
    "omitted_continuum_check",
    "exp_reciprocal_preimages",
    "nearest_exp_reciprocal_preimage",
    "attach_closed_forms",
    "annulus_targets",
    "DEFAULT_SAMPLES",
]

DEFAULT_SAMPLES = 4096
EXTENSION_TOL = 1e-3
UPTICK = 0.10
_CHUNK = 512


def _as_complex(x) -> complex:
    if isinstance(x, complex):
        return x
    if np.ndim(x) == 0:
        return complex(x)
    x = np.asarray(x, dtype=float)
    return complex(x[0], x[1])


def _is_inf(a) -> bool:
    return isinstance(a, _Infinity) or (np.ndim(a) == 0 and not np.isfinite(np.abs(complex(a))))


@dataclass(frozen=True)
class SingularityExperiment:
    map: DiscreteMap
    zeta0: complex = 0j
    approach_radii: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    targets: tuple = ()
    chordal_params: ChordalParams = field(default_factory=lambda: ChordalParams(basepoint=0))
    phase_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "zeta0", _as_complex(self.zeta0))
        radii = tuple(float(r) for r in self.approach_radii)
        if not radii:
            raise ValueError("at least one approach radius is required")
        if any(not (r > 0 and math.isfinite(r)) for r in radii):
            raise ValueError(f"approach radii must be positive and finite, got {radii}")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"approach radii must be strictly decreasing, got {radii}")
        object.__setattr__(self, "approach_radii", radii)
        tg = []
        for a in self.targets:
            if _is_inf(a):
                if not self.chordal_params.is_standard:
                    raise ValueError("infinity is a target only for the standard chordal parameters")
                tg.append(INFINITY)
            else:
                tg.append(_as_complex(a))
        object.__setattr__(self, "targets", tuple(tg))

    @property
    def basepoint(self) -> complex:
        return _as_complex(self.chordal_params.basepoint)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """f at complex points; overflow becomes complex infinity, undefined becomes NaN."""
        z = np.asarray(z, dtype=complex)
        pts = np.stack([z.real, z.imag], axis=-1)
        with np.errstate(all="ignore"):
            w = np.asarray(self.map(pts), dtype=float)
        out = np.empty(w.shape[:-1], dtype=complex)
        out.real, out.imag = w[..., 0], w[..., 1]
        blown = np.isinf(w).any(axis=-1)
        out[blown] = complex(np.inf, 0.0)
        return out

    def shell(self, r: float, n: int) -> np.ndarray:
        theta = self.phase_offset + 2.0 * np.pi * np.arange(n) / n
        return self.zeta0 + r * np.exp(1j * theta)

    def distance(self, w, a) -> np.ndarray:
        """Chordal distance from image values w (complex, inf allowed) to one target."""
        w = np.asarray(w, dtype=complex)
        prm = self.chordal_params
        if prm.is_standard:
            ea = sphere_embedding(np.array(complex(np.inf) if _is_inf(a) else a), self.basepoint)
            return np.linalg.norm(sphere_embedding(w, self.basepoint) - ea, axis=-1)
        c = self.basepoint
        with np.errstate(all="ignore"):
            wt = prm.weight(np.abs(w - c)) * float(prm.weight(abs(a - c)))
            d = np.abs(w - a) / wt
        return np.where(np.isfinite(w), d, np.nan)

    def diameter_data(self, w: np.ndarray) -> tuple[float, tuple[int, int], np.ndarray]:
        """Chordal diameter of a finite image sample, its witness pair and per-point eccentricity."""
        n = len(w)
        if n < 2:
            return 0.0, (0, 0), np.zeros(n)
        if self.chordal_params.is_standard:
            e = sphere_embedding(w, self.basepoint)
            ecc = np.empty(n)
            best, pair = -1.0, (0, 0)
            for lo in range(0, n, _CHUNK):
                blk = np.linalg.norm(e[lo:lo + _CHUNK, None, :] - e[None, :, :], axis=-1)
                ecc[lo:lo + _CHUNK] = blk.max(axis=1)
                i, j = np.unravel_index(int(np.argmax(blk)), blk.shape)
                if blk[i, j] > best:
                    best, pair = float(blk[i, j]), (lo + int(i), int(j))
            return best, pair, ecc
        ecc = np.array([np.nanmax(self.distance(w, a)) for a in w])
        i = int(np.argmax(ecc))
        j = int(np.nanargmax(self.distance(w, w[i])))
        return float(ecc[i]), (i, j), ecc


# --------------------------------------------------------------------------- density scan


def exp_reciprocal_preimages(A: complex, ks: Sequence[int], zeta0: complex = 0j) -> np.ndarray:
    """The points zeta0 + 1/(log A + 2 pi i k), principal logarithm, for the given k."""
    A = complex(A)
    if A == 0:
        raise ValueError("exp(1/z) omits the value 0")
    return zeta0 + 1.0 / (np.log(A) + 2j * np.pi * np.asarray(ks, dtype=float))


def nearest_exp_reciprocal_preimage(A: complex, z: complex, zeta0: complex = 0j) -> tuple[int, complex]:
    """Index k and closed-form preimage of A closest to the point z."""
    u = 1.0 / (complex(z) - zeta0)
    k0 = int(round(((u - np.log(complex(A))) / (2j * np.pi)).real))
    ks = np.arange(k0 - 2, k0 + 3)
    pre = exp_reciprocal_preimages(A, ks, zeta0)
    i = int(np.argmin(np.abs(pre - z)))
    return int(ks[i]), complex(pre[i])


def annulus_targets(n: int = 8, r_in: float = 0.5, r_out: float = 2.0) -> tuple[complex, ...]:
    """n targets alternating between the two boundary circles, evenly spread in angle."""
    out = []
    for j in range(n):
        rad = r_in if j % 2 == 0 else r_out
        out.append(complex(rad * np.exp(2j * np.pi * (j + 0.5) / n)))
    return tuple(out)


@dataclass
class TargetResult:
    target: object
    best_distance: float
    witness: complex
    witness_radius: float
    coarse_distance: float
    closed_form_gap: float = float("nan")

    def row(self) -> dict:
        t = self.target
        return {
            "target_re": float("inf") if _is_inf(t) else t.real,
            "target_im": 0.0 if _is_inf(t) else t.imag,
            "best_distance": self.best_distance,
            "witness_re": self.witness.real,
            "witness_im": self.witness.imag,
            "witness_radius": self.witness_radius,
            "closed_form_gap": self.closed_form_gap,
        }


@dataclass
class ClusterReport:
    results: list[TargetResult]
    skipped: int
    samples_per_shell: int
    radii: tuple[float, ...]

    def max_distance(self, exclude: Sequence = ()) -> float:
        ex = [complex(e) for e in exclude]
        vals = [r.best_distance for r in self.results if _is_inf(r.target) or complex(r.target) not in ex]
        return max(vals) if vals else 0.0

    @property
    def summary(self) -> float:
        return self.max_distance()

    def rows(self) -> list[dict]:
        return [r.row() for r in self.results]


def _residual_fn(exp: SingularityExperiment, a):
    """Difference of sphere images; bounded, smooth through infinity."""
    z0, c = exp.zeta0, exp.basepoint
    ea = sphere_embedding(np.array(complex(np.inf) if _is_inf(a) else a), c)

    def fn(x):
        z = z0 + x[0] * np.exp(1j * x[1])
        w = exp.evaluate(np.array([z]))
        if np.isnan(w[0].real):
            return np.full(3, 1.0)
        return sphere_embedding(w, c)[0] - ea

    return fn


def cluster_density_scan(exp: SingularityExperiment, samples_per_shell: int = DEFAULT_SAMPLES, n_starts: int = 8, stop_at: float = 1e-12) -> ClusterReport:
    """Closest approach of f to each target over the approach shells.

    Each shell is scanned at uniform angles; the best coarse samples then seed a
    bounded least-squares polish in polar coordinates, with the radius kept in
    [r/2, 3r/2] (capped by the outermost radius) for a start on the shell of
    radius r.  The recorded radius is the smallest approach radius containing
    the witness.
    """
    if samples_per_shell < 1:
        raise ValueError("samples_per_shell must be positive")
    radii = exp.approach_radii
    shells = [exp.shell(r, samples_per_shell) for r in radii]
    images = [exp.evaluate(z) for z in shells]
    bad = [np.isnan(w.real) | np.isnan(w.imag) for w in images]
    skipped = int(sum(b.sum() for b in bad))
    if skipped:
        log.info("skipped %d samples where the map is undefined", skipped)

    results = []
    for a in exp.targets:
        cand = []  # (distance, shell index, sample index)
        for s, (w, b) in enumerate(zip(images, bad)):
            d = exp.distance(w, a)
            d[b] = np.inf
            # distinct basins: local minima along the periodic shell
            loc = np.flatnonzero((d <= np.roll(d, 1)) & (d <= np.roll(d, -1)) & np.isfinite(d))
            order = loc[np.argsort(d[loc], kind="stable")][:n_starts]
            cand.extend((float(d[i]), s, int(i)) for i in order)
        if not cand:
            raise ValueError("the map is undefined on every sample")
        cand.sort()
        coarse = cand[0]
        best = TargetResult(a, coarse[0], complex(shells[coarse[1]][coarse[2]]), radii[coarse[1]], coarse[0])
        fn = _residual_fn(exp, a) if exp.chordal_params.is_standard else None
        for d0, s, i in cand:
            if fn is None or best.best_distance <= stop_at:
                break
            r = radii[s]
            th = float(np.angle(shells[s][i] - exp.zeta0))
            lo, hi = 0.5 * r, min(1.5 * r, radii[0])
            sol = least_squares(fn, np.array([r, th]), bounds=([lo, -np.inf], [hi, np.inf]), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
            z = exp.zeta0 + sol.x[0] * np.exp(1j * sol.x[1])
            w = exp.evaluate(np.array([z]))
            if np.isnan(w[0].real):
                continue
            d = float(exp.distance(w, a)[0])
            if d < best.best_distance:
                rec = min(q for q in radii if q >= abs(z - exp.zeta0) * (1 - 1e-12))
                best = TargetResult(a, d, complex(z), rec, coarse[0])
        if not _is_inf(a) and a == 0:
            log.info("scan floor at target 0: %.3e", best.best_distance)
        results.append(best)
    return ClusterReport(results, skipped, samples_per_shell, radii)


def attach_closed_forms(report: ClusterReport, zeta0: complex = 0j) -> ClusterReport:
    """Gap between each exp(1/z) witness and the nearest closed-form preimage."""
    for res in report.results:
        if _is_inf(res.target) or res.target == 0:
            continue
        _, pre = nearest_exp_reciprocal_preimage(res.target, res.witness, zeta0)
        res.closed_form_gap = abs(pre - res.witness)
    return report


# --------------------------------------------------------------------------- extension


@dataclass
class ExtensionReport:
    extends: bool
    radii: tuple[float, ...]
    diameters: list[float]
    limit: complex | None
    witness_pair: tuple[complex, complex]
    witness_separation: float
    slope: float
    skipped: int

    def rows(self) -> list[dict]:
        return [{"radius": r, "diameter": d} for r, d in zip(self.radii, self.diameters)]


def _loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def extension_check(exp: SingularityExperiment, samples_per_shell: int = DEFAULT_SAMPLES, tol: float = EXTENSION_TOL) -> ExtensionReport:
    """Chordal diameter of f(shell) per radius; the map extends when these fall below tol."""
    diam, skipped = [], 0
    finest = None
    for r in exp.approach_radii:
        w = exp.evaluate(exp.shell(r, samples_per_shell))
        ok = ~(np.isnan(w.real) | np.isnan(w.imag))
        skipped += int((~ok).sum())
        w = w[ok]
        d, pair, ecc = exp.diameter_data(w)
        diam.append(d)
        finest = (w, pair, ecc, d)
    w, pair, ecc, d_last = finest
    ups = all(b <= a * (1 + UPTICK) for a, b in zip(diam, diam[1:]))
    extends = bool(ups and d_last < tol)
    limit = complex(w[int(np.argmin(ecc))]) if extends else None
    slope = _loglog_slope(exp.approach_radii, diam)
    return ExtensionReport(extends, exp.approach_radii, diam, limit, (complex(w[pair[0]]), complex(w[pair[1]])), d_last, slope, skipped)


# --------------------------------------------------------------------------- omitted continuum


@dataclass
class OmittedReport:
    holds: bool
    closest: float
    witness: complex
    continuum_diameter: float


def omitted_continuum_check(exp: SingularityExperiment, K: Sequence, margin: float, samples_per_shell: int = DEFAULT_SAMPLES, refine: bool = True) -> OmittedReport:
    """Whether every sampled f(x) stays at chordal distance >= margin from the continuum K.

    K is given as a dense sample of a connected set.  With refine the closest
    approach to each K point is polished as in the density scan, which is what
    exposes the cluster set of an essential singularity.
    """
    pts = np.array([complex(np.inf) if _is_inf(k) else _as_complex(k) for k in K])
    if len(pts) < 2:
        raise PreconditionError("K must be a nondegenerate continuum")
    kd, _, _ = exp.diameter_data(pts)
    if not kd > 0:
        raise PreconditionError("K must have positive chordal diameter")
    best, wit = np.inf, 0j
    for r in exp.approach_radii:
        z = exp.shell(r, samples_per_shell)
        w = exp.evaluate(z)
        ok = ~(np.isnan(w.real) | np.isnan(w.imag))
        for k in pts:
            d = exp.distance(w[ok], INFINITY if not np.isfinite(k) else k)
            i = int(np.argmin(d))
            if d[i] < best:
                best, wit = float(d[i]), complex(z[ok][i])
    if refine and best >= margin:
        sub = SingularityExperiment(exp.map, exp.zeta0, exp.approach_radii, tuple(INFINITY if not np.isfinite(k) else k for k in pts), exp.chordal_params, exp.phase_offset)
        rep = cluster_density_scan(sub, samples_per_shell, n_starts=2)
        for res in rep.results:
            if res.best_distance < best:
                best, wit = res.best_distance, res.witness
    return OmittedReport(bool(best >= margin), best, wit, kd)
