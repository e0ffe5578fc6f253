import numpy as np
import pytest

from kasner_fluids.fluid_params import FluidParameters, rescaling_T
from kasner_fluids.grid_solver import grid_coordinates
from kasner_fluids.kasner_geometry import KasnerBackground
from kasner_fluids.sivp_driver import (
    SivpConfig,
    decay_fit,
    pressure_fit,
    resample,
    solve_sivp,
    uniqueness_probe,
)


@pytest.fixture(scope="module")
def params():
    return FluidParameters(1.8, KasnerBackground(0.0))


def _v_star(N):
    x = grid_coordinates(N)[0]
    v = np.zeros((N, 4))
    v[:, 0] = 1.0
    v[:, 1] = 0.1 * np.sin(x)
    return v


@pytest.fixture(scope="module")
def run(params):
    cfg = SivpConfig(ell=7, n_min=6, t_end=-1e-4, lot_tau_max=16.0)
    return solve_sivp(_v_star(16), params, cfg)


def test_trivial_data_gives_constant_solution(params):
    v = np.zeros((8, 4))
    v[:, 0] = 1.3
    r = solve_sivp(v, params, SivpConfig(lot_tau_max=8.0))
    assert r.trivial and r.converged
    # U = v_star at every output time and V = T v_star
    np.testing.assert_allclose(r.U, np.broadcast_to(v, r.U.shape), atol=1e-13)
    t = r.times[-1]
    np.testing.assert_allclose(r.V()[-1], rescaling_T(t, params.G) * v, rtol=1e-12, atol=1e-14)
    assert all(f["skipped"] for f in decay_fit(r))


def test_converges_and_reaches_t_end(run):
    assert run.converged
    assert run.t_end <= -1e-4 * 0.5 and run.t_end >= -1e-4
    assert run.differences[-1] < run.config.tol * run.scale


def test_zero_data_runs_shrink(run):
    # the first differences, above round-off, shrink at least by 2 per halving of t_n
    f = run.shrink_factors()
    assert np.all(f[:4] <= 0.5)


def test_decay_rates_at_least_eps(run):
    fits = [f for f in decay_fit(run) if not f["skipped"]]
    assert fits
    for f in fits:
        assert f["slope"] >= run.params.eps - 0.02


def test_pressure_blowup_slope(run):
    pf = pressure_fit(run)
    assert pf["timelike"]
    assert pf["relative_error"] <= 0.02


def test_uniqueness_probe_same_run(run):
    probe = uniqueness_probe(run, run)
    assert probe["max_scaled"] == 0.0
    assert probe["bounded"]


def test_decay_fit_needs_two_decades(run):
    with pytest.raises(ValueError):
        decay_fit(run, t_window=(1e-2, 5e-2))


@pytest.mark.parametrize("N", [8, 32])
def test_resample_band_limited_exact(N):
    x16 = grid_coordinates(16)[0]
    f = np.stack([np.sin(x16), np.cos(2 * x16)], axis=-1)
    g = resample(f, N, 1)
    xN = grid_coordinates(N)[0]
    np.testing.assert_allclose(g, np.stack([np.sin(xN), np.cos(2 * xN)], axis=-1), atol=1e-13)


def test_rejects_bad_shape(params):
    with pytest.raises(ValueError):
        solve_sivp(np.ones((8, 3)), params)


def test_unreachable_t_end(params):
    with pytest.raises(ValueError):
        solve_sivp(_v_star(8), params, SivpConfig(t_end=-1e-12, n_max=10, lot_tau_max=8.0))


def test_large_data_violates_hypotheses_and_is_reported(params):
    # a 10% variation of v*^0 puts the LOT outside the forward hypotheses at T0 = -0.5
    v = _v_star(16)
    v[:, 0] += 0.1 * np.cos(grid_coordinates(16)[0])
    r = solve_sivp(v, params, SivpConfig(ell=7, lot_tau_max=16.0))
    assert not r.conditions.passed
    assert not r.converged
    assert "hyperbolicity window" in r.diagnostic
    with pytest.raises(ValueError):
        decay_fit(r)
    with pytest.raises(ValueError):
        pressure_fit(r)
