from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsps.budget import (HardwareConfig, all_presets, rate_projection, rate_vs_lifetime_curve, response_time,
                         scheme_difference_map, scheme_efficiency)
from hsps.emitter import EmitterParams, eta_ash
from hsps.presets import model_system

MODEL = model_system().emitter


@pytest.mark.parametrize("det,layout,ps", [("snspd", "on-chip", 265), ("snspd", "free-space", 765),
                                           ("spad", "on-chip", 2250), ("spad", "free-space", 2750)])
def test_response_time_presets(det, layout, ps):
    hw = HardwareConfig.preset(det, layout)
    assert response_time(hw) == pytest.approx(ps)
    assert hw.response_time_ns == pytest.approx(ps / 1000)


def test_presets_and_validation():
    assert len(all_presets()) == 4
    with pytest.raises(ValueError):
        HardwareConfig.preset("pmt", "on-chip")
    with pytest.raises(ValueError):
        HardwareConfig(-1.0, 15.0)


def test_model_system_rates():
    hw = HardwareConfig.preset("snspd", "on-chip")
    ash = rate_projection(replace(MODEL, alpha=0.72), "ash", 200e6, hardware=hw)
    assert ash == pytest.approx(37.5e6, rel=0.01)
    tgf = rate_projection(replace(MODEL, alpha=0.72), "tgf", 200e6)
    assert tgf == pytest.approx(17.8e6, rel=0.01)
    timed = rate_projection(MODEL, "timed", 200e6)
    assert timed == pytest.approx(26.8e6, rel=0.01)


@settings(max_examples=30)
@given(st.sampled_from(["ash", "timed", "tgf", "bs"]), st.floats(1e5, 1e10), st.floats(1.1, 10))
def test_rate_linear_in_rep_rate(scheme, rep, k):
    a = rate_projection(MODEL, scheme, rep)
    assert rate_projection(MODEL, scheme, k * rep) == pytest.approx(k * a, rel=1e-12)


def test_rate_projection_validation():
    with pytest.raises(ValueError):
        rate_projection(MODEL, "ash", 0.0)
    with pytest.raises(ValueError):
        scheme_efficiency(MODEL, "nope")


def test_no_biexciton_no_heralded_rate():
    p = EmitterParams(0.6, 0.0, 1.6, 0.4, alpha=0.9)
    for scheme in ("ash", "timed", "bs"):
        assert rate_projection(p, scheme, 1e8) == 0.0


def test_ash_explicit_gate_overrides_hardware():
    hw = HardwareConfig.preset("spad", "free-space")
    assert scheme_efficiency(MODEL, "ash", hardware=hw, gate_ns=0.1) == eta_ash(MODEL, 0.1)
    assert scheme_efficiency(MODEL, "ash") == eta_ash(MODEL, 0.0)


GRID = np.linspace(0.05, 1.0, 6)


@pytest.fixture(scope="module")
def dmap():
    return scheme_difference_map(GRID, GRID)


def test_difference_map_sign():
    m = scheme_difference_map([0.61], [0.7, 1e-3])
    # bright biexciton: heralding wins; almost no biexciton: nothing to herald
    assert m.difference[0, 0] > 0
    assert m.difference[0, 1] < 0


def test_difference_map_refinement_consistent(dmap):
    fine = np.linspace(0.05, 1.0, 11)
    refined = scheme_difference_map(fine, fine)
    # every coarse node is also a fine node
    idx = [int(np.argmin(np.abs(fine - g))) for g in GRID]
    sub = refined.difference[np.ix_(idx, idx)]
    both = ~np.isnan(sub) & ~dmap.unreachable
    assert np.allclose(sub[both], dmap.difference[both], atol=1e-9)
    assert (np.isnan(sub) == dmap.unreachable).all()


def test_difference_map_rows(dmap):
    rows = dmap.rows()
    assert len(rows) == GRID.size ** 2
    assert all((r["eta_tgf"] is None) == (r["difference"] is None) for r in rows)


def test_difference_map_unreachable_marked():
    # a slow biexciton keeps TGF purity below target; other cells still compute
    m = scheme_difference_map([0.05, 0.3], [1.0])
    assert m.unreachable.tolist() == [[True], [False]]
    assert m.rows()[0]["eta_tgf"] is None
    assert np.isfinite(m.eta_ash).all()


def test_difference_map_dimensionless():
    # rescaling every lifetime leaves the efficiencies unchanged
    for a, b in [(0.3, 0.2), (0.8, 0.6)]:
        p1 = EmitterParams.from_beta(a, b, 1.0)
        p2 = EmitterParams.from_beta(a, b, 7.3)
        assert scheme_efficiency(p1, "tgf") == pytest.approx(scheme_efficiency(p2, "tgf"), rel=1e-6)
        assert scheme_efficiency(p1, "timed") == pytest.approx(scheme_efficiency(p2, "timed"), rel=1e-9)


def test_rate_curves_crossovers():
    grid = np.geomspace(0.05, 10, 400)
    curves = rate_vs_lifetime_curve(replace(MODEL, alpha=0.72), grid)
    key = "timed vs ash[snspd/on-chip]"
    assert curves.crossovers_ns[key] == pytest.approx(0.6, abs=0.2)
    assert curves.crossovers_ns["tgf vs ash[snspd/on-chip]"] == pytest.approx(0.3, abs=0.2)
    # the closed form matches a sign change on the sampled curves
    d = curves.rates_hz["ash[snspd/on-chip]"] - curves.rates_hz["timed"]
    i = int(np.flatnonzero(np.diff(np.sign(d)))[0])
    assert grid[i] <= curves.crossovers_ns[key] <= grid[i + 1]
    assert len(curves.rows()) == grid.size


def test_rate_curve_ash_matches_direct():
    grid = np.array([0.5, 1.6, 4.0])
    hw = HardwareConfig.preset("snspd", "free-space")
    curves = rate_vs_lifetime_curve(MODEL, grid, hardware=[hw])
    for t, r in zip(grid, curves.rates_hz[f"ash[{hw.name}]"]):
        p = MODEL.scaled(t / MODEL.tau_x_ns)
        assert r == pytest.approx(eta_ash(p, hw.response_time_ns) / (3 * t * 1e-9), rel=1e-9)
    with pytest.raises(ValueError):
        rate_vs_lifetime_curve(MODEL, [0.0, 1.0])
