"""Biexciton-exciton cascade single-photon sources: analytic model, Monte Carlo
time-tag simulation, scheme emulation, parameter estimation and hardware budgets."""

from .budget import HardwareConfig, rate_projection, rate_vs_lifetime_curve, response_time, scheme_difference_map
from .detectors import DetectorConfig, correction_factors
from .emitter import (EmitterParams, NoiseParams, NoSolutionError, PathProbs, SchemeMetrics, bs_herald_efficiency,
                      determinicity, eta_ash, eta_timed, noise_adjusted_purity, path_probabilities, qy_ratio,
                      solve_tgf_gate, standalone_metrics, tc_opt, tgf_metrics)
from .estimation import derive_emitter_params, estimate_noise_rates, fit_exponentials
from .herald import HeraldReport, emulate, emulate_ash, emulate_bs_herald, emulate_tgf, emulate_timed, sweep
from .presets import get_preset
from .simulate import SimConfig, simulate_stream
from .timetag import (EventStream, PulseGroup, PulseGroups, TagRecord, lifetime_histogram, localize, raw_purity,
                      read_stream, write_stream)

__version__ = "0.1.0"
