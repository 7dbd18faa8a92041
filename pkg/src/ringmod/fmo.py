"""Finite mean oscillation on discrete spaces and the psi-integral funnel machinery.

Ball averages are measure-weighted node sums over the open ball
B(x0, eps) = {v : d(v, x0) < eps}.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .modulus import INFINITE, Infinite, PreconditionError
from .space import DiscreteSpace, ahlfors_probe

log = logging.getLogger(__name__)

__all__ = [
    "ScalarField",
    "PsiProfile",
    "FMOReport",
    "FunnelDecayReport",
    "mean_oscillation",
    "fmo_classify",
    "psi_integral",
    "funnel_ratio",
    "fmo_implies_funnel_check",
    "eta_normalized",
    "dyadic_radii",
    "QUAD_EPSABS",
    "RATE_THRESHOLD",
]

QUAD_EPSABS = 1e-10
RATE_THRESHOLD = 0.1


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True)
class ScalarField:
    """Nonnegative node function Q.

    Radial kinds are measured from ``center``: ``constant`` (Q = value),
    ``log_inverse`` (value * log(1/|x - c|)), ``power`` (value * |x - c|^exponent).
    ``table`` holds one value per node.
    """

    kind: str = "constant"
    value: float = 1.0
    exponent: float = 0.0
    center: tuple[float, ...] | None = None
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "log_inverse", "power", "table"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ValueError("table field needs node values")

    @classmethod
    def constant(cls, c: float = 1.0) -> "ScalarField":
        return cls("constant", value=float(c))

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "ScalarField":
        return cls("table", table=tuple(float(v) for v in values))

    def radius(self, space: DiscreteSpace) -> np.ndarray:
        if space.coords is None:
            raise ValueError("radial fields need node coordinates")
        c = np.zeros(space.coords.shape[1]) if self.center is None else np.asarray(self.center, dtype=float)
        return np.linalg.norm(space.coords - c, axis=1)

    def values(self, space: DiscreteSpace) -> np.ndarray:
        """Node values; entries may be +inf where the field is singular."""
        if self.kind == "constant":
            out = np.full(space.n_nodes, float(self.value))
        elif self.kind == "table":
            out = np.asarray(self.table, dtype=float)
            if out.shape != (space.n_nodes,):
                raise ValueError(f"table has {out.size} values for {space.n_nodes} nodes")
        else:
            r = self.radius(space)
            with np.errstate(divide="ignore"):
                if self.kind == "log_inverse":
                    out = self.value * -np.log(r)
                else:
                    out = self.value * np.power(r, self.exponent)
            out = np.where(r == 0, np.inf, out) if self.kind == "log_inverse" or self.exponent < 0 else out
        bad = np.flatnonzero(out < 0)
        if len(bad):
            raise ValueError(f"field is negative at node {int(bad[0])} ({out[bad[0]]:.6g})")
        return out


# --------------------------------------------------------------------------- mean oscillation


def _ball(space: DiscreteSpace, x0, eps: float) -> np.ndarray:
    if not eps > 0:
        raise ValueError("radius must be positive")
    idx = np.flatnonzero(space.distances_from(x0) < eps)
    if len(idx) == 0:
        raise ValueError(f"ball of radius {eps} around {x0!r} contains no nodes")
    return idx


def _mean_osc(q: np.ndarray, mu: np.ndarray) -> tuple[float, float]:
    total = mu.sum()
    mean = float(q @ mu / total)
    return mean, float(np.abs(q - mean) @ mu / total)


def mean_oscillation(Q: ScalarField, x0, eps: float, space: DiscreteSpace) -> tuple[float, float]:
    """Measure-weighted mean of Q over B(x0, eps) and mean absolute deviation from it."""
    idx = _ball(space, x0, eps)
    q = Q.values(space)[idx]
    if not np.all(np.isfinite(q)):
        raise ValueError(f"Q is not integrable on the ball of radius {eps}")
    return _mean_osc(q, space.measure[idx])


def dyadic_radii(r0: float, k_min: int, k_max: int) -> np.ndarray:
    """r0 * 2^-k for k = k_min..k_max."""
    return r0 * 2.0 ** -np.arange(k_min, k_max + 1, dtype=float)


@dataclass
class FMOReport:
    radii: np.ndarray
    mean_values: np.ndarray
    oscillations: np.ndarray
    limsup_estimate: float
    divergence_rate: float
    ratios: np.ndarray
    verdict: str

    @property
    def fmo_consistent(self) -> bool:
        return self.verdict == "FMO-consistent"

    def rows(self) -> list[dict]:
        return [
            {"radius": float(r), "mean": float(m), "oscillation": float(o)}
            for r, m, o in zip(self.radii, self.mean_values, self.oscillations)
        ]


def fmo_classify(
    Q: ScalarField, x0, radii: Sequence[float], space: DiscreteSpace, rate_threshold: float = RATE_THRESHOLD
) -> FMOReport:
    """Finite-resolution FMO verdict over decreasing radii.

    The divergence rate is the least-squares slope of log(oscillation) against
    log(1/eps) over the last half of the radii.  The field is FMO-consistent
    when that slope is below ``rate_threshold`` (or all oscillations vanish).
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 2:
        raise ValueError("need at least two radii")
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    values = Q.values(space)
    dist = space.distances_from(x0)
    means, oscs = [], []
    for r in radii:
        idx = np.flatnonzero(dist < r)
        if len(idx) == 0:
            raise ValueError(f"ball of radius {r} contains no nodes")
        q = values[idx]
        if not np.all(np.isfinite(q)):
            raise ValueError(f"Q is not integrable on the ball of radius {r}")
        m, o = _mean_osc(q, space.measure[idx])
        means.append(m)
        oscs.append(o)
    means = np.asarray(means)
    oscs = np.asarray(oscs)
    half = max(2, (len(radii) + 1) // 2)
    tail_r, tail_o = radii[-half:], oscs[-half:]
    scale = max(1.0, float(np.max(np.abs(means))))
    if np.all(tail_o <= 1e-12 * scale):
        rate = 0.0
    elif np.any(tail_o <= 0):
        rate = math.inf
    else:
        rate = float(np.polyfit(np.log(1.0 / tail_r), np.log(tail_o), 1)[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(oscs[:-1] > 0, oscs[1:] / oscs[:-1], np.nan)
    verdict = "FMO-consistent" if rate < rate_threshold else "diverging"
    return FMOReport(radii, means, oscs, float(tail_o.max()), rate, ratios, verdict)


# --------------------------------------------------------------------------- psi profiles


@dataclass(frozen=True)
class PsiProfile:
    """Weight psi on (0, epsilon0).

    Kinds: ``constant`` (psi = value), ``zero``, ``log``
    (psi = 1 / (t log(scale / t)), defined for t < scale), ``power``
    (psi = value * t^exponent) and ``table`` (piecewise-linear through ``table``
    points).  ``epsilon0`` defaults to ``scale`` for the log profile and to +inf
    otherwise.
    """

    kind: str = "log"
    value: float = 1.0
    scale: float = 1.0
    exponent: float = -1.0
    epsilon0: float | None = None
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "zero", "log", "power", "table"):
            raise ValueError(f"unknown psi profile {self.kind!r}")
        if self.kind == "log" and not self.scale > 0:
            raise ValueError("log profile scale must be positive")
        if self.kind == "table":
            if not self.table or len(self.table) < 2:
                raise ValueError("table profile needs at least two points")
            t = np.array([a for a, _ in self.table])
            v = np.array([b for _, b in self.table])
            if np.any(np.diff(t) <= 0) or np.any(v < 0):
                raise ValueError("table abscissae must increase and values be nonnegative")
        if self.epsilon0 is not None and not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")

    @property
    def eps0(self) -> float:
        if self.epsilon0 is not None:
            return float(self.epsilon0)
        if self.kind == "log":
            return float(self.scale)
        if self.kind == "table":
            return float(self.table[-1][0])
        return math.inf

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "constant":
                return np.full_like(t, float(self.value))
            if self.kind == "zero":
                return np.zeros_like(t)
            if self.kind == "log":
                return 1.0 / (t * np.log(self.scale / t))
            if self.kind == "power":
                return self.value * np.power(t, self.exponent)
        xs = np.array([a for a, _ in self.table])
        ys = np.array([b for _, b in self.table])
        return np.interp(t, xs, ys, left=ys[0], right=ys[-1])

    def closed_form(self, a: float, b: float) -> float | None:
        """Integral over (a, b) where an antiderivative is registered."""
        if self.kind == "constant":
            return self.value * (b - a)
        if self.kind == "zero":
            return 0.0
        if self.kind == "log":
            return math.log(math.log(self.scale / a)) - math.log(math.log(self.scale / b))
        if self.kind == "power":
            s = self.exponent
            if s == -1.0:
                return self.value * math.log(b / a)
            return self.value * (b ** (s + 1) - a ** (s + 1)) / (s + 1)
        return None


def _quad(profile: PsiProfile, a: float, b: float) -> float:
    if profile.kind == "table":
        pts = [t for t, _ in profile.table if a < t < b]
        return float(quad(lambda t: float(profile(t)), a, b, points=pts or None, epsabs=QUAD_EPSABS, limit=200)[0])
    return float(quad(lambda t: float(profile(t)), a, b, epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200)[0])


def psi_integral(profile: PsiProfile, eps: float, eps2: float, use_closed_form: bool = True) -> float | Infinite:
    """I(eps, eps2) = integral of psi over (eps, eps2).

    Returns the INFINITE sentinel when the integral diverges (the log profile
    reaching its scale).  A zero result is legal but warns, since the funnel
    construction needs I > 0.
    """
    if not 0 < eps < eps2:
        raise ValueError(f"need 0 < eps < eps2, got eps={eps}, eps2={eps2}")
    if profile.kind == "log" and eps2 >= profile.scale:
        log.warning("psi integral diverges: log profile is singular at t = %g", profile.scale)
        return INFINITE
    if eps2 > profile.eps0 * (1 + 1e-12):
        raise ValueError(f"eps2={eps2} exceeds the profile range epsilon0={profile.eps0}")
    value = profile.closed_form(eps, eps2) if use_closed_form else None
    if value is None:
        value = _quad(profile, eps, eps2)
    if value == 0.0:
        warnings.warn("psi integral is zero; the funnel construction needs I > 0", stacklevel=2)
    return float(value)


def funnel_ratio(
    Q: ScalarField, profile: PsiProfile, q: float, x0, eps: float, eps0: float, space: DiscreteSpace
) -> float:
    """Sum over eps < d(x, x0) < eps0 of Q psi^q(d) mu, divided by I(eps, eps0)^q."""
    if not q >= 1:
        raise ValueError("q must be >= 1")
    I = psi_integral(profile, eps, eps0)
    if I is INFINITE:
        raise ValueError("psi integral diverges on (eps, eps0)")
    if I <= 0:
        raise ZeroDivisionError(f"I(eps, eps0) = {I}; the psi integral must be positive")
    d = space.distances_from(x0)
    idx = np.flatnonzero((d > eps) & (d < eps0))
    if len(idx) == 0:
        return 0.0
    qv = Q.values(space)[idx]
    w = qv * profile(d[idx]) ** q * space.measure[idx]
    w = np.where(qv == 0, 0.0, w)
    return float(w.sum() / I**q)


@dataclass
class FunnelDecayReport:
    eps: np.ndarray
    ratios: np.ndarray
    decreasing: bool
    trend_slope: float
    doubling_constant: float
    fmo: FMOReport = field(repr=False)


def fmo_implies_funnel_check(
    Q: ScalarField,
    x0,
    space: DiscreteSpace,
    alpha: float,
    q: float,
    eps0: float = 0.5,
    n_steps: int = 6,
    gamma_max: float | None = None,
) -> FunnelDecayReport:
    """Check the FMO-to-funnel implication with psi(t) = 1/(t log(1/t)).

    Hypotheses are probed first: the FMO verdict over the dyadic radii and the
    doubling ratio mu(B(2r)) / mu(B(r)) against ``gamma_max`` times
    log(1/r)^(alpha - 2).  Then the funnel ratios over eps = eps0 * 2^-k,
    k = 1..n_steps, must decrease over the last half of the sequence.
    """
    if not 0 < eps0 < 1:
        raise ValueError("eps0 must lie in (0, 1) for psi(t) = 1/(t log(1/t))")
    eps = dyadic_radii(eps0, 1, n_steps)
    report = fmo_classify(Q, x0, np.concatenate([[eps0], eps]), space)
    if not report.fmo_consistent:
        raise PreconditionError(f"FMO hypothesis failed: divergence rate {report.divergence_rate:.3g}")
    if gamma_max is None:
        gamma_max = 2.0 ** (alpha + 1)
    reg = ahlfors_probe(space, x0, eps, alpha)
    allowed = gamma_max * np.log(1.0 / eps) ** (alpha - 2.0)
    doubling = reg.doubling_ratios
    if np.any(doubling > allowed):
        raise PreconditionError(f"doubling hypothesis failed: ratio {doubling.max():.3g} exceeds {gamma_max:.3g}")
    profile = PsiProfile("log", scale=1.0)
    ratios = np.array([funnel_ratio(Q, profile, q, x0, e, eps0, space) for e in eps])
    half = max(2, (len(eps) + 1) // 2)
    tail = ratios[-half:]
    decreasing = bool(np.all(np.diff(tail) < 0))
    slope = float(np.polyfit(np.arange(half), np.log(tail), 1)[0]) if np.all(tail > 0) else -math.inf
    return FunnelDecayReport(eps, ratios, decreasing and slope < 0, slope, float(doubling.max()), report)


def eta_normalized(profile: PsiProfile, r1: float, r2: float) -> Callable[[np.ndarray], np.ndarray]:
    """eta = psi / I(r1, r2) on (r1, r2), zero elsewhere; integrates to one over (r1, r2)."""
    if not 0 < r1 < r2:
        raise ValueError(f"need 0 < r1 < r2, got r1={r1}, r2={r2}")
    I = psi_integral(profile, r1, r2)
    if I is INFINITE or not I > 0:
        raise ValueError(f"psi integral over ({r1}, {r2}) is {I}; cannot normalize")

    def eta(t):
        t = np.asarray(t, dtype=float)
        inside = (t > r1) & (t < r2)
        out = np.zeros_like(t)
        out[inside] = profile(t[inside]) / I
        return out

    eta.r1, eta.r2, eta.total = r1, r2, I
    return eta
