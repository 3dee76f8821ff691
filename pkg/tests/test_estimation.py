import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hsps.detectors import DetectorConfig
from hsps.emitter import EmitterParams, NoiseParams, standalone_metrics
from hsps.estimation import (CalibrationError, DegenerateFitWarning, ExpComponent, FitResult, NoEstimateError,
                             assign_lifetimes, derive_emitter_params, estimate_noise_rates, fit_exponentials,
                             measure_p1, qy_from_p1)
from hsps.simulate import SimConfig, simulate_stream
from hsps.timetag import Histogram, PulseGroups, localize


def synthetic(components, baseline=0.0, width_ps=50, n_bins=400, rng=None):
    t = (np.arange(n_bins) + 0.5) * width_ps * 1e-3
    mean = baseline + sum(a * np.exp(-t / tau) for a, tau in components)
    counts = mean if rng is None else rng.poisson(mean)
    return Histogram(width_ps, np.asarray(np.round(counts), dtype=np.int64))


def fit_of(*taus):
    return FitResult([ExpComponent(1.0, t) for t in taus], 0.0, 0.0)


def test_single_exponential_recovered():
    rng = np.random.default_rng(0)
    # 10^6 counts in total, tau = 1.6 ns
    width = 0.05
    a = 1e6 * width / 1.6
    h = synthetic([(a, 1.6)], width_ps=50, n_bins=400, rng=rng)
    fit = fit_exponentials(h, 1)
    assert fit.lifetimes_ns[0] == pytest.approx(1.6, rel=0.01)
    assert fit.converged and fit.residual_norm >= 0
    assert fit.stderr["lifetimes_ns"][0] < 0.01


def test_flat_histogram():
    rng = np.random.default_rng(1)
    h = Histogram(100, rng.poisson(50.0, 300))
    fit = fit_exponentials(h, 1)
    assert fit.components[0].amplitude <= 3 * fit.stderr["amplitudes"][0] + 1e-9
    # Neyman weights pull a flat level down by about one count
    assert fit.baseline == pytest.approx(h.counts.mean() - 1, abs=0.5)


def test_three_components_noiseless():
    h = synthetic([(5000, 0.3), (20000, 2.0), (3000, 30.0)], baseline=4.0, width_ps=100, n_bins=2000)
    fit = fit_exponentials(h, 3)
    assert fit.lifetimes_ns == pytest.approx([0.3, 2.0, 30.0], rel=1e-3)
    assert fit.baseline == pytest.approx(4.0, rel=1e-2)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 1000.0))
def test_scale_equivariance(c):
    h = synthetic([(8000, 0.5), (3000, 3.0)], baseline=2.0, width_ps=50, n_bins=600)
    scaled = Histogram(h.bin_width_ps, (h.counts * c).astype(float))
    f1, f2 = fit_exponentials(h, 2), fit_exponentials(scaled, 2)
    assert f2.lifetimes_ns == pytest.approx(f1.lifetimes_ns, rel=1e-6)
    assert f2.amplitudes == pytest.approx(c * f1.amplitudes, rel=1e-6)


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_exponentials(synthetic([(100, 1.0)]), 4)
    with pytest.raises(ValueError):
        fit_exponentials(Histogram(100, np.array([0, 5, 0, 3, 0, 0])), 2)


def test_degenerate_warning():
    h = synthetic([(10000, 1.0)], width_ps=50, n_bins=400)
    with pytest.warns(DegenerateFitWarning):
        fit_exponentials(h, 2)


def test_assign_lifetimes():
    assert assign_lifetimes(fit_of(0.3, 2.0, 30.0)) == (2.0, 30.0, 0.3)
    assert assign_lifetimes(fit_of(2.0, 30.0)) == (2.0, 30.0, None)
    # a short component above the ceiling is taken as the biexciton
    assert assign_lifetimes(fit_of(0.6, 2.0, 30.0)) == (0.6, 30.0, None)


def test_derive_nqd_values():
    fit = fit_of(0.3, 0.0673 * 30, 30.0)
    p = derive_emitter_params(fit, 0.088, 4.0, 0.0192)
    assert p.qy_bx / p.qy_x == pytest.approx(0.269, abs=1e-3)
    assert p.qy_x == pytest.approx(0.173, abs=1e-3)
    assert p.qy_bx == pytest.approx(0.0465, abs=2e-4)


def test_derive_no_biexciton_branch():
    p = qy_from_p1(0.02, 0.1, 0.0, 30.0, 1.0)
    assert p.qy_x == pytest.approx(0.2, rel=1e-12) and p.qy_bx == 0.0


@settings(max_examples=100)
@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.05, 1), st.floats(0.1, 30))
def test_derive_roundtrip_p1(qx, ratio, alpha, tau_x):
    qb = min(1.0, qx * ratio)
    truth = EmitterParams.from_beta(qx, qb, tau_x, alpha=alpha)
    p1 = standalone_metrics(truth).efficiency
    assume(0 < p1 < 1)
    got = derive_emitter_params(fit_of(truth.tau_bx_ns, truth.tau_x_ns), alpha, 4.0, p1)
    assert standalone_metrics(got).efficiency == pytest.approx(p1, rel=1e-10, abs=1e-15)


def test_derive_errors():
    with pytest.raises(ValueError):
        derive_emitter_params(fit_of(1.0, 4.0), 0.5, 4.0, 0.0)
    with pytest.raises(CalibrationError):
        # p1 larger than any yield can produce at this alpha
        derive_emitter_params(fit_of(1.0, 4.0), 0.1, 4.0, 0.5)


def test_measure_p1():
    g = PulseGroups(4, np.array([0, 0, 2]), np.array([1, 2, 1], dtype=np.uint8), np.array([100, 900, 500]))
    assert measure_p1(g, 0.0) == 0.5
    assert measure_p1(g, 0.3) == 0.5
    assert measure_p1(g, 0.6) == 0.25


def test_noise_rates_noiseless():
    p = EmitterParams(0.5, 0.5, 1.0, 0.25, alpha=0.8)
    g = localize(simulate_stream(SimConfig(p, n_pulses=100_000, rep_period_ns=20, seed=30)))
    with pytest.warns(UserWarning, match="three-photon"):
        est = estimate_noise_rates(g, DetectorConfig())
    assert est.total == 0.0 and est.n3_measured == 0


def test_noise_rates_no_pairs():
    g = PulseGroups(3, np.array([0, 1]), np.array([1, 1], dtype=np.uint8), np.array([10, 20]))
    with pytest.raises(NoEstimateError):
        estimate_noise_rates(g, DetectorConfig())


def test_noise_rates_boosted_regime():
    # every pulse emits a detected pair; noise is the only source of a third photon
    p = EmitterParams(1.0, 1.0, 5.0, 1.25, alpha=1.0)
    n = NoiseParams(eta_cn=0.02, tau_cn_ns=0.3, eta_un=0.01)
    cfg = SimConfig(p, n, DetectorConfig(), n_pulses=1_000_000, rep_period_ns=100, seed=31)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_noise_rates(localize(simulate_stream(cfg)), cfg.detectors, t_cut_ns=0.0)
    # with t_cut 0 both estimates see all noise
    assert est.total == pytest.approx(0.03, rel=0.1)
    est2 = estimate_noise_rates(localize(simulate_stream(cfg)), cfg.detectors, t_cut_ns=1.5)
    assert est2.correlated > 0 and est2.uncorrelated > 0
