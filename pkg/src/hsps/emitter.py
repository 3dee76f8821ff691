"""Closed-form efficiency, purity and determinicity of a biexciton-exciton cascade.

All times are in nanoseconds. Functions are pure and accept either scalars or
numpy arrays for the gate-time arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Literal, Optional

import numpy as np

# relative lifetime mismatch below which the equal-lifetime limits are used
DEGENERACY_TOL = 1e-9


class NoSolutionError(ValueError):
    """Raised when a requested operating point cannot be reached."""


def _check_prob(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


def _check_nonneg_time(name, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"{name} must be >= 0, got {t!r}")


@dataclass(frozen=True)
class EmitterParams:
    qy_x: float
    qy_bx: float
    tau_x_ns: float
    tau_bx_ns: float
    beta: float = 4.0
    alpha: float = 1.0

    def __post_init__(self):
        _check_prob("qy_x", self.qy_x)
        _check_prob("qy_bx", self.qy_bx)
        _check_prob("alpha", self.alpha)
        if not self.tau_x_ns > 0 or not self.tau_bx_ns > 0:
            raise ValueError("lifetimes must be strictly positive")
        if not self.beta > 0:
            raise ValueError("beta must be strictly positive")

    @classmethod
    def from_beta(cls, qy_x, qy_bx, tau_x_ns, beta=4.0, alpha=1.0):
        """Derive the biexciton lifetime from the yield ratio.

        ``tau_bx = tau_x * (qy_bx / qy_x) / beta``.
        """
        if qy_x <= 0 or qy_bx <= 0:
            raise ValueError("beta scaling needs non-zero quantum yields")
        return cls(qy_x, qy_bx, tau_x_ns, tau_x_ns * (qy_bx / qy_x) / beta, beta, alpha)

    @classmethod
    def from_lifetimes(cls, qy_x, tau_x_ns, tau_bx_ns, beta=4.0, alpha=1.0):
        """Derive the biexciton yield from the two lifetimes."""
        return cls(qy_x, qy_x * qy_ratio(tau_x_ns, tau_bx_ns, beta), tau_x_ns, tau_bx_ns, beta, alpha)

    def scaled(self, factor):
        """Same emitter with both lifetimes multiplied by ``factor``."""
        return EmitterParams(self.qy_x, self.qy_bx, self.tau_x_ns * factor,
                             self.tau_bx_ns * factor, self.beta, self.alpha)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class NoiseParams:
    """Emitter-level noise probabilities per pulse (multiply by alpha for detected)."""

    eta_cn: float = 0.0
    tau_cn_ns: float = 0.3
    eta_un: float = 0.0

    def __post_init__(self):
        _check_prob("eta_cn", self.eta_cn)
        _check_prob("eta_un", self.eta_un)
        if not self.tau_cn_ns > 0:
            raise ValueError("tau_cn_ns must be strictly positive")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PathProbs:
    """Probabilities of the eight emission paths relative to a fixed gate.

    p1: BX before, X after. p2: both before. p3: both after.
    p4/p5: only BX detected, before/after. p6/p7: only X detected, before/after.
    p8: nothing detected.
    """

    p1: float
    p2: float
    p3: float
    p4: float
    p5: float
    p6: float
    p7: float
    p8: float

    def as_array(self):
        return np.array([getattr(self, f"p{i}") for i in range(1, 9)])

    def total(self):
        return sum(getattr(self, f"p{i}") for i in range(1, 9))


@dataclass(frozen=True)
class SchemeMetrics:
    efficiency: float
    # None marks an empty denominator (no signal / no trigger)
    purity: Optional[float]
    determinicity: Optional[float] = None


def qy_ratio(tau_x_ns, tau_bx_ns, beta=4.0):
    """QY_BX / QY_X implied by the radiative-rate scaling ``beta``."""
    if tau_x_ns <= 0 or tau_bx_ns <= 0 or beta <= 0:
        raise ValueError("lifetimes and beta must be strictly positive")
    return beta * tau_bx_ns / tau_x_ns


def _degenerate(p):
    return abs(1.0 - p.tau_bx_ns / p.tau_x_ns) < DEGENERACY_TOL


def _split_fraction(p, t):
    """P(T_BX <= t < T_X) for an always-emitting cascade."""
    gx, gbx = 1.0 / p.tau_x_ns, 1.0 / p.tau_bx_ns
    if _degenerate(p):
        return gbx * t * np.exp(-gx * t)
    # (e^{-gx t} - e^{-gbx t})/(gbx - gx) with the slower rate factored out;
    # -expm1 keeps it accurate when the rates are close
    d = abs(gbx - gx)
    return gbx * np.exp(-min(gx, gbx) * t) * (-np.expm1(-d * t)) / d


def path_probabilities(p: EmitterParams, gate_ns) -> PathProbs:
    _check_nonneg_time("gate_ns", gate_ns)
    t = np.asarray(gate_ns, dtype=float)
    a, b, al = p.qy_x, p.qy_bx, p.alpha
    both = al * al * a * b
    bx_only = al * b * (1 - al * a)
    x_only = al * a * (1 - al * b)
    e_bx = np.exp(-t / p.tau_bx_ns)
    e_x = np.exp(-t / p.tau_x_ns)

    p1 = both * _split_fraction(p, t)
    p2 = both * (-np.expm1(-t / p.tau_bx_ns)) - p1
    p3 = both * e_bx
    p4 = bx_only * (-np.expm1(-t / p.tau_bx_ns))
    p5 = bx_only * e_bx
    p6 = x_only * (-np.expm1(-t / p.tau_x_ns))
    p7 = x_only * e_x
    p8 = (1 - al * b) * (1 - al * a) * np.ones_like(t)
    vals = [p1, p2, p3, p4, p5, p6, p7, p8]
    if t.ndim == 0:
        vals = [float(v) for v in vals]
    return PathProbs(*vals)


def standalone_metrics(p: EmitterParams) -> SchemeMetrics:
    """Unfiltered source: one- and two-photon probabilities per pulse."""
    a, b, al = p.qy_x, p.qy_bx, p.alpha
    p1 = al * a + al * b - 2 * al * al * a * b
    p2 = al * al * a * b
    if p1 + p2 == 0:
        return SchemeMetrics(p1, None)
    return SchemeMetrics(p1, p1 / (p1 + p2))


def tc_opt(tau_x_ns, tau_bx_ns):
    """Cutoff time maximising the passive-heralding efficiency."""
    if tau_x_ns <= 0 or tau_bx_ns <= 0:
        raise ValueError("lifetimes must be strictly positive")
    r = tau_x_ns / tau_bx_ns
    if abs(r - 1.0) < DEGENERACY_TOL:
        return float(tau_x_ns)
    return tau_x_ns * math.log(r) / (r - 1.0)


def eta_timed(p: EmitterParams, t_c_ns):
    """Passive (fixed cutoff) heralding efficiency, identical to path p1."""
    _check_nonneg_time("t_c_ns", t_c_ns)
    out = p.alpha ** 2 * p.qy_x * p.qy_bx * _split_fraction(p, np.asarray(t_c_ns, dtype=float))
    return out if np.ndim(t_c_ns) else float(out)


def eta_timed_opt(p: EmitterParams):
    return eta_timed(p, tc_opt(p.tau_x_ns, p.tau_bx_ns))


def eta_ash(p: EmitterParams, t_r_ns):
    """Active heralding efficiency for switch response time ``t_r_ns``."""
    _check_nonneg_time("t_r_ns", t_r_ns)
    out = p.alpha ** 2 * p.qy_x * p.qy_bx * np.exp(-np.asarray(t_r_ns, dtype=float) / p.tau_x_ns)
    return out if np.ndim(t_r_ns) else float(out)


def bs_herald_efficiency(p: EmitterParams):
    """50:50 beam-splitter heralding: half of all detected pairs split correctly."""
    return p.alpha ** 2 * p.qy_x * p.qy_bx / 2.0


def tgf_metrics(p: EmitterParams, t_f_ns) -> SchemeMetrics:
    """Time-gated filtering: keep only photons arriving after ``t_f_ns``."""
    pp = path_probabilities(p, t_f_ns)
    eff = pp.p1 + pp.p5 + pp.p7
    den = eff + pp.p3
    if den == 0:
        return SchemeMetrics(0.0, 1.0)
    return SchemeMetrics(eff, eff / den)


def _tgf_purity(p, t):
    m = tgf_metrics(p, t)
    return m.purity, m.efficiency


def solve_tgf_gate(p: EmitterParams, s_target, *, rel_tol=1e-6, t_max_factor=60.0):
    """Smallest gate time whose TGF purity reaches ``s_target``.

    Returns ``(t_f_ns, efficiency)``. Bisection to ``rel_tol * tau_x``.
    """
    if not 0.0 < s_target < 1.0:
        raise ValueError("s_target must lie in (0, 1)")
    s0, e0 = _tgf_purity(p, 0.0)
    if s0 >= s_target:
        return 0.0, e0

    t_cap = t_max_factor * max(p.tau_x_ns, p.tau_bx_ns)
    hi = min(p.tau_x_ns, p.tau_bx_ns)
    while _tgf_purity(p, hi)[0] < s_target:
        if hi >= t_cap:
            raise NoSolutionError(
                f"TGF purity {s_target} unreachable (reaches {_tgf_purity(p, hi)[0]:.6f} at {hi:.3g} ns)")
        hi = min(2 * hi, t_cap)
    lo = 0.0
    resolution = rel_tol * p.tau_x_ns
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _tgf_purity(p, mid)[0] >= s_target:
            hi = mid
        else:
            lo = mid
    return hi, _tgf_purity(p, hi)[1]


def determinicity(p: EmitterParams, scheme: Literal["TIMED", "ASH"], gate_ns):
    """Fraction of trigger events that herald a real signal photon.

    For ASH the trigger probability is the sum of all events with at least one
    detected photon, ``alpha*QY_X + alpha*QY_BX - alpha^2*QY_X*QY_BX``.
    """
    _check_nonneg_time("gate_ns", gate_ns)
    scheme = scheme.upper()
    if scheme == "TIMED":
        pp = path_probabilities(p, gate_ns)
        num, den = pp.p1, pp.p1 + pp.p2 + pp.p4 + pp.p6
    elif scheme == "ASH":
        a, b, al = p.qy_x, p.qy_bx, p.alpha
        both = al * al * a * b
        num = both * math.exp(-gate_ns / p.tau_x_ns)
        p2f = both - num
        den = num + p2f + al * a * (1 - al * b) + al * b * (1 - al * a)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if den == 0:
        return None
    return num / den


def noise_adjusted_purity(p: EmitterParams, n: NoiseParams, include_correlated=True):
    """Heralded-signal purity limited by noise counts (ASH at zero response time)."""
    ab = p.qy_x * p.qy_bx
    eta = n.eta_un + (n.eta_cn if include_correlated else 0.0)
    den = ab + eta * (p.qy_x + p.qy_bx)
    if den == 0:
        return 1.0
    return 1.0 - ab * eta / den
