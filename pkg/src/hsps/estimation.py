"""Lifetime fitting and emitter-parameter extraction from histograms and pulse groups."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, nnls

from .detectors import DetectorConfig, unfold_counts
from .emitter import EmitterParams
from .timetag import Histogram, PulseGroups, multiplicity_counts

log = logging.getLogger(__name__)

DEFAULT_NOISE_CEILING_NS = 0.45


class FitError(RuntimeError):
    """The lifetime fit did not converge; ``best`` holds the best attempt."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateFitWarning(UserWarning):
    pass


class CalibrationError(ValueError):
    pass


class NoEstimateError(ValueError):
    pass


@dataclass(frozen=True)
class ExpComponent:
    amplitude: float  # counts per bin at t = 0
    lifetime_ns: float


@dataclass
class FitResult:
    components: list[ExpComponent]
    baseline: float
    residual_norm: float
    stderr: dict = field(default_factory=dict)
    reduced_chi2: float = float("nan")
    converged: bool = True
    n_evaluations: int = 0

    @property
    def lifetimes_ns(self):
        return np.array([c.lifetime_ns for c in self.components])

    @property
    def amplitudes(self):
        return np.array([c.amplitude for c in self.components])

    def model(self, t_ns):
        t = np.asarray(t_ns, dtype=float)
        return self.baseline + sum(c.amplitude * np.exp(-t / c.lifetime_ns) for c in self.components)

    def to_dict(self):
        return {
            "components": [{"amplitude": c.amplitude, "lifetime_ns": c.lifetime_ns} for c in self.components],
            "baseline": self.baseline,
            "residual_norm": self.residual_norm,
            "reduced_chi2": self.reduced_chi2,
            "stderr": {k: list(map(float, v)) if np.ndim(v) else float(v) for k, v in self.stderr.items()},
            "converged": self.converged,
        }


class _VarPro:
    """Separable least squares: lifetimes are nonlinear, amplitudes/baseline are solved by NNLS."""

    def __init__(self, t, y):
        self.t = t
        self.y = y
        self.w = 1.0 / np.sqrt(np.maximum(y, 1.0))
        self.yw = y * self.w

    def design(self, taus):
        cols = [np.ones_like(self.t)] + [np.exp(-self.t / tau) for tau in taus]
        return np.column_stack(cols)

    def linear(self, taus):
        a = self.design(taus) * self.w[:, None]
        coef, _ = nnls(a, self.yw)
        return coef, a @ coef - self.yw

    def residual(self, log_taus):
        return self.linear(np.exp(log_taus))[1]


def _starts(lo, hi, k):
    grid = np.geomspace(lo, hi, k + 3)
    return [np.log(c) for c in itertools.combinations(grid, k)]


def fit_exponentials(h: Histogram, k: int, *, t_min_ns=0.0, t_max_ns=None,
                     max_iter=500, xtol=1e-8) -> FitResult:
    """Fit ``baseline + sum_i a_i exp(-t/tau_i)`` to a lifetime histogram.

    Poisson-weighted least squares (weights ``1/max(count, 1)``) by variable
    projection with multi-start log-spaced lifetime initialisation.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    t = h.centers_ns
    y = h.counts.astype(float)
    sel = t >= t_min_ns
    if t_max_ns is not None:
        sel &= t <= t_max_ns
    nz = np.flatnonzero(y > 0)
    if nz.size:
        sel &= np.arange(y.size) <= nz[-1]
    t, y = t[sel], y[sel]
    if np.count_nonzero(y) < 4 * k + 1:
        raise ValueError(f"need at least {4 * k + 1} non-zero bins for a {k}-exponential fit")

    width = h.bin_width_ps * 1e-3
    span = t[-1] - t[0] + width
    lo_b, hi_b = math.log(width / 10), math.log(10 * span)
    vp = _VarPro(t - t[0], y)

    best, best_cost, n_eval = None, np.inf, 0
    for x0 in _starts(2 * width, span / 2, k):
        sol = least_squares(vp.residual, x0, bounds=(lo_b, hi_b), xtol=xtol, ftol=1e-12,
                            gtol=1e-12, max_nfev=max_iter, method="trf")
        n_eval += sol.nfev
        if sol.cost < best_cost:
            best, best_cost = sol, sol.cost

    taus = np.exp(best.x)
    coef, res = vp.linear(taus)
    order = np.argsort(taus)
    taus, amps = taus[order], coef[1:][order]
    # amplitudes are referenced to t = 0, not to the first fitted bin
    amps = amps * np.exp(t[0] / taus)
    result = FitResult(
        components=[ExpComponent(float(a), float(tau)) for a, tau in zip(amps, taus)],
        baseline=float(coef[0]),
        residual_norm=float(np.linalg.norm(res)),
        converged=best.status > 0,
        n_evaluations=n_eval,
    )
    dof = max(t.size - (2 * k + 1), 1)
    result.reduced_chi2 = float(res @ res / dof)
    result.stderr = _stderr(t, vp.w, result)

    if not result.converged:
        raise FitError(f"fit did not converge within {max_iter} evaluations", best=result)
    if k > 1 and (np.any(taus[1:] / taus[:-1] < 1.05) or np.any(amps <= 0)):
        warnings.warn("components coincide or vanish; fewer lifetimes are resolvable",
                      DegenerateFitWarning, stacklevel=2)
    return result


def _stderr(t, w, fit: FitResult):
    cols = [np.ones_like(t)]
    for c in fit.components:
        cols.append(np.exp(-t / c.lifetime_ns))
    for c in fit.components:
        cols.append(c.amplitude * t / c.lifetime_ns ** 2 * np.exp(-t / c.lifetime_ns))
    j = np.column_stack(cols) * w[:, None]
    cov = np.linalg.pinv(j.T @ j) * max(fit.reduced_chi2, 1e-300)
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    k = len(fit.components)
    return {"baseline": sd[0], "amplitudes": sd[1:1 + k], "lifetimes_ns": sd[1 + k:]}


def measure_p1(groups: PulseGroups, t_f_ns=0.3):
    """Fraction of pulses with at least one photon after the filter."""
    if groups.n_pulses == 0:
        raise ValueError("no pulses")
    return groups.after(t_f_ns).occupied.size / groups.n_pulses


def assign_lifetimes(fit: FitResult, noise_ceiling_ns=DEFAULT_NOISE_CEILING_NS):
    """Return ``(tau_bx, tau_x, tau_noise_or_None)`` from a fitted component list."""
    taus = sorted(c.lifetime_ns for c in fit.components)
    if len(taus) < 2:
        raise ValueError("need at least two fitted components")
    noise = None
    if len(taus) >= 3 and taus[0] < noise_ceiling_ns:
        noise, taus = taus[0], taus[1:]
    return taus[0], taus[-1], noise


def derive_emitter_params(fit: FitResult, alpha, beta, p1_measured,
                          noise_ceiling_ns=DEFAULT_NOISE_CEILING_NS) -> EmitterParams:
    """Split the one-photon probability into QY_X and QY_BX using the lifetime ratio.

    Solves ``alpha*q*(1 + rho) - 2*alpha^2*rho*q^2 = p1`` for ``q = QY_X`` with
    ``rho = beta * tau_bx / tau_x``.
    """
    if not 0 < p1_measured < 1:
        raise ValueError("p1_measured must lie in (0, 1)")
    tau_bx, tau_x, _ = assign_lifetimes(fit, noise_ceiling_ns)
    rho = beta * tau_bx / tau_x
    return qy_from_p1(p1_measured, alpha, rho, tau_x, tau_bx, beta)


def qy_from_p1(p1, alpha, rho, tau_x_ns, tau_bx_ns, beta=4.0) -> EmitterParams:
    b = alpha * (1 + rho)
    disc = b * b - 8 * alpha * alpha * rho * p1
    if disc < 0:
        raise CalibrationError(f"no real quantum yield reproduces p1={p1} at alpha={alpha}, rho={rho}")
    # smaller root, written to stay finite as rho -> 0
    q = 2 * p1 / (b + math.sqrt(disc))
    # absorb rounding at the physical bound
    if 1 < q <= 1 + 1e-9:
        q = 1.0
    if 1 < rho * q <= 1 + 1e-9:
        q = 1.0 / rho
    if not 0 < q <= 1 or rho * q > 1:
        raise CalibrationError(f"derived yields out of range: QY_X={q}, QY_BX={rho * q}")
    return EmitterParams(q, rho * q, tau_x_ns, tau_bx_ns, beta, alpha)


@dataclass(frozen=True)
class NoiseEstimate:
    total: float
    correlated: float
    uncorrelated: float
    n2_measured: int
    n3_measured: int


def _triple_ratio(groups, d, t_f_ns):
    n_obs = multiplicity_counts(groups, t_f_ns)
    if n_obs[1] == 0:
        raise NoEstimateError(f"no two-photon pulses after t_f={t_f_ns} ns")
    _, n2, n3 = unfold_counts(n_obs, d)
    return max(n3, 0.0) / n2, n_obs


def estimate_noise_rates(groups: PulseGroups, d: DetectorConfig, t_cut_ns=1.0) -> NoiseEstimate:
    """Detected noise probability per pulse from the three- to two-photon ratio.

    The uncorrelated part is the same ratio after discarding events before
    ``t_cut_ns`` (choose at least three correlated-noise lifetimes).
    """
    total, n_obs = _triple_ratio(groups, d, 0.0)
    if n_obs[2] < 10:
        warnings.warn(f"only {n_obs[2]} three-photon pulses; noise estimate is unreliable", stacklevel=2)
    uncorrelated, _ = _triple_ratio(groups, d, t_cut_ns)
    return NoiseEstimate(total, total - uncorrelated, uncorrelated, int(n_obs[1]), int(n_obs[2]))
