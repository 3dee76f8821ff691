"""Switch response-time budgets and single-photon rate projections."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .emitter import (EmitterParams, NoSolutionError, bs_herald_efficiency, eta_ash, eta_timed_opt,
                      solve_tgf_gate)

DEFAULT_S_TARGET = 0.995

# (latency, jitter) in ps
DETECTORS = {"snspd": (50.0, 15.0), "spad": (2000.0, 50.0)}
LAYOUTS = {"on-chip": 0.0, "free-space": 500.0}
LATCH_DELAY_PS = 185.0
MODULATOR_RISE_PS = 15.0


@dataclass(frozen=True)
class HardwareConfig:
    detector_latency_ps: float
    detector_jitter_ps: float
    latch_delay_ps: float = LATCH_DELAY_PS
    modulator_rise_ps: float = MODULATOR_RISE_PS
    propagation_ps: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "name" and not v >= 0:
                raise ValueError(f"{k} must be >= 0, got {v!r}")

    @classmethod
    def preset(cls, detector: str, layout: str) -> "HardwareConfig":
        det, lay = detector.lower(), layout.lower()
        if det not in DETECTORS:
            raise ValueError(f"unknown detector {detector!r}; choose from {sorted(DETECTORS)}")
        if lay not in LAYOUTS:
            raise ValueError(f"unknown layout {layout!r}; choose from {sorted(LAYOUTS)}")
        lat, jit = DETECTORS[det]
        return cls(lat, jit, propagation_ps=LAYOUTS[lay], name=f"{det}/{lay}")

    @property
    def response_time_ns(self):
        return response_time(self) * 1e-3


def all_presets() -> list[HardwareConfig]:
    return [HardwareConfig.preset(d, l) for d in DETECTORS for l in LAYOUTS]


def response_time(cfg: HardwareConfig) -> float:
    """Total switch response time in ps; jitter is added linearly (worst case)."""
    return (cfg.detector_latency_ps + cfg.detector_jitter_ps + cfg.latch_delay_ps
            + cfg.modulator_rise_ps + cfg.propagation_ps)


def scheme_efficiency(p: EmitterParams, scheme: str, *, hardware: Optional[HardwareConfig] = None,
                      gate_ns: Optional[float] = None, s_target=DEFAULT_S_TARGET) -> float:
    """Per-pulse efficiency of a scheme at its operating point.

    ASH uses ``gate_ns`` as the response time, else the one of ``hardware``
    (zero if neither is given). TIMED runs at its optimal cutoff, TGF at the
    gate reaching ``s_target``.
    """
    scheme = scheme.lower()
    if scheme == "ash":
        if gate_ns is None:
            gate_ns = hardware.response_time_ns if hardware is not None else 0.0
        return eta_ash(p, gate_ns)
    if scheme == "timed":
        return eta_timed_opt(p)
    if scheme == "tgf":
        return solve_tgf_gate(p, s_target)[1]
    if scheme == "bs":
        return bs_herald_efficiency(p)
    raise ValueError(f"unknown scheme {scheme!r}")


def rate_projection(p: EmitterParams, scheme: str, rep_rate_hz: float, *,
                    hardware: Optional[HardwareConfig] = None, gate_ns: Optional[float] = None,
                    s_target=DEFAULT_S_TARGET) -> float:
    """Single-photon rate in Hz: repetition rate times scheme efficiency."""
    if not rep_rate_hz > 0:
        raise ValueError("rep_rate_hz must be > 0")
    return rep_rate_hz * scheme_efficiency(p, scheme, hardware=hardware, gate_ns=gate_ns, s_target=s_target)


@dataclass
class DifferenceMap:
    qy_x: np.ndarray
    qy_bx: np.ndarray
    eta_ash: np.ndarray  # indexed [i_x, i_bx]
    eta_tgf: np.ndarray  # NaN where s_target is unreachable

    @property
    def difference(self):
        return self.eta_ash - self.eta_tgf

    @property
    def unreachable(self):
        return np.isnan(self.eta_tgf)

    def rows(self):
        out = []
        for i, a in enumerate(self.qy_x):
            for j, b in enumerate(self.qy_bx):
                tgf = self.eta_tgf[i, j]
                out.append({"qy_x": float(a), "qy_bx": float(b), "eta_ash": float(self.eta_ash[i, j]),
                            "eta_tgf": None if np.isnan(tgf) else float(tgf),
                            "difference": None if np.isnan(tgf) else float(self.eta_ash[i, j] - tgf)})
        return out


def scheme_difference_map(qy_x_grid: Sequence[float], qy_bx_grid: Sequence[float], s_target=DEFAULT_S_TARGET,
                          alpha=1.0, beta=4.0, t_r_over_tau_x=0.0) -> DifferenceMap:
    """ASH minus TGF efficiency over a yield grid, lifetimes from beta scaling.

    The result is dimensionless: tau_x is fixed to 1 and the ASH response time
    is given in units of tau_x.
    """
    qx = np.asarray(qy_x_grid, dtype=float)
    qb = np.asarray(qy_bx_grid, dtype=float)
    ash = np.empty((qx.size, qb.size))
    tgf = np.full((qx.size, qb.size), np.nan)
    for i, a in enumerate(qx):
        for j, b in enumerate(qb):
            p = EmitterParams.from_beta(a, b, 1.0, beta=beta, alpha=alpha)
            ash[i, j] = eta_ash(p, t_r_over_tau_x)
            try:
                tgf[i, j] = solve_tgf_gate(p, s_target)[1]
            except NoSolutionError:
                pass
    return DifferenceMap(qx, qb, ash, tgf)


@dataclass
class RateCurves:
    tau_x_ns: np.ndarray
    rates_hz: dict  # label -> array
    crossovers_ns: dict  # "<scheme> vs <ash label>" -> tau_x or None

    def rows(self):
        return [{"tau_x_ns": float(t), **{k: float(v[i]) for k, v in self.rates_hz.items()}}
                for i, t in enumerate(self.tau_x_ns)]


def rate_vs_lifetime_curve(template: EmitterParams, tau_x_grid: Sequence[float],
                           hardware: Sequence[HardwareConfig] = (), s_target=DEFAULT_S_TARGET,
                           pulses_per_tau=3.0) -> RateCurves:
    """Rates of ASH (one curve per hardware config), TIMED and TGF against tau_x.

    The biexciton lifetime keeps the template ratio and the repetition period
    is ``pulses_per_tau * tau_x``. TIMED and TGF efficiencies are scale free,
    so each crossover with an ASH curve has the closed form
    ``tau_x = T_R / ln(eta_ash(0) / eta_other)``.
    """
    hardware = list(hardware) or all_presets()
    taus = np.asarray(tau_x_grid, dtype=float)
    if np.any(taus <= 0):
        raise ValueError("tau_x grid must be positive")
    ratio = template.tau_bx_ns / template.tau_x_ns
    rep = 1.0 / (pulses_per_tau * taus * 1e-9)

    unit = EmitterParams(template.qy_x, template.qy_bx, 1.0, ratio, template.beta, template.alpha)
    eta_t = eta_timed_opt(unit)
    try:
        eta_g = solve_tgf_gate(unit, s_target)[1]
    except NoSolutionError:
        eta_g = 0.0
    eta0 = eta_ash(unit, 0.0)

    rates = {}
    crossings = {}
    for hw in hardware:
        t_r = hw.response_time_ns
        rates[f"ash[{hw.name}]"] = rep * eta0 * np.exp(-t_r / taus)
        for label, eta in (("timed", eta_t), ("tgf", eta_g)):
            ok = 0 < eta < eta0 and t_r > 0
            crossings[f"{label} vs ash[{hw.name}]"] = t_r / math.log(eta0 / eta) if ok else None
    rates["timed"] = rep * eta_t
    rates["tgf"] = rep * eta_g
    return RateCurves(taus, rates, crossings)
