import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kasner_fluids.fluid_params import FluidParameters, rescaling_Th_inv
from kasner_fluids.grid_solver import Trajectory, grid_coordinates
from kasner_fluids.kasner_geometry import KasnerBackground
from kasner_fluids.sivp_driver import SivpConfig, solve_sivp
from kasner_fluids.stability_driver import (
    StabilityConfig,
    band_limited_perturbation,
    euler_kappa_report,
    extract_asymptotic_data,
    extraction_exponents,
    predicted_limit_exponents,
    run_stability,
)


@pytest.fixture(scope="module")
def params():
    return FluidParameters(1.8, KasnerBackground(0.0))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1.0), st.integers(0, 3), st.integers(1, 4), st.integers(0, 1000))
def test_perturbation_sup_norm_and_band(amplitude, component, band, seed):
    f = band_limited_perturbation((32, 4), amplitude, component, band, seed)
    assert np.max(np.abs(f[:, component])) == pytest.approx(amplitude, rel=1e-12)
    others = [a for a in range(4) if a != component]
    assert np.all(f[:, others] == 0.0)
    amps = np.abs(np.fft.fft(f[:, component]))
    k = np.abs(np.fft.fftfreq(32, 1 / 32))
    assert np.max(amps[k > band]) <= 1e-12 * np.max(amps)


def test_perturbation_reproducible():
    a = band_limited_perturbation((8, 8, 4), 0.1, -1, 2, seed=3)
    b = band_limited_perturbation((8, 8, 4), 0.1, -1, 2, seed=3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, band_limited_perturbation((8, 8, 4), 0.1, -1, 2, seed=4))


def test_predicted_exponents_reference(params):
    pred = predicted_limit_exponents(params, params.G[2] / 10)
    assert pred["W0"] == pytest.approx(min(0.15 + 0.1, 2 * 0.09))
    assert pred["W_spatial"] == pytest.approx(min(0.15, 0.18 - 0.02))


def test_extraction_exponents_sorted(params):
    e = extraction_exponents(params)
    assert e[:3] == pytest.approx([0.15, 0.2, 0.3])
    assert all(a < b for a, b in zip(e, e[1:]))


def test_kappa_pass_and_fail(params):
    assert euler_kappa_report(params, R=1e-3, sigma=params.G[2] / 10).passed
    assert not euler_kappa_report(params, R=1e-3, sigma=params.G[2]).passed


def _synthetic(params, W0, c1, c2, decades=6.0, n=200):
    s = np.logspace(np.log10(0.5), np.log10(0.5) - decades, n)
    traj = Trajectory()
    for si in s:
        W = W0 + c1 * si**0.15 + c2 * si**0.2
        traj.times.append(-si)
        traj.states.append(rescaling_Th_inv(-si, params.G) * W)
    return traj


def test_extraction_recovers_limit_of_exact_expansion(params):
    x = grid_coordinates(8)[0]
    W0 = np.zeros((8, 4))
    W0[:, 0] = 1.0 + 0.05 * np.cos(x)
    W0[:, 1] = 0.1 * np.sin(x)
    c1 = np.zeros_like(W0)
    c1[:, 1] = 0.3 * np.cos(x)
    c2 = np.zeros_like(W0)
    c2[:, 0] = 0.2 * np.sin(x)
    ex = extract_asymptotic_data(_synthetic(params, W0, c1, c2), params, d=1)
    assert not ex.fallback
    np.testing.assert_allclose(ex.W0, W0, atol=1e-9)
    assert ex.rates["W0"] == pytest.approx(0.2, abs=1e-6)
    assert ex.rates["W1"] == pytest.approx(0.15, abs=1e-6)
    assert ex.rates["W2"] is None


def test_large_amplitude_truncates_with_diagnostic(params):
    x = grid_coordinates(16)[0]
    v = np.zeros((16, 4))
    v[:, 0] = 1.0
    v[:, 1] = 0.1 * np.sin(x)
    scfg = SivpConfig(ell=7, n_min=6, lot_tau_max=16.0)
    base = solve_sivp(v, params, scfg)
    run = run_stability(v, params, scfg, StabilityConfig(amplitude=2.0, t_extract=-1e-4), base=base)
    assert run.perturbed.truncated
    assert "hyperbolicity window" in run.diagnostic
    assert run.checks() == {"perturbed_timelike": False}
    assert run.extraction is None
