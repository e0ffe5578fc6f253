import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kasner_fluids.fluid_params import FluidParameters
from kasner_fluids.fuchsian_core import constant_system, scalar_model_system
from kasner_fluids.grid_solver import (
    EvolveControls,
    FieldState,
    energy_identity_residual,
    evolve,
    fd4_derivative,
    grid_coordinates,
    sobolev_norm,
    spectral_derivative,
)
from kasner_fluids.kasner_geometry import KasnerBackground
from kasner_fluids.ode_oracles import homogeneous_euler
from kasner_fluids.sivp_driver import euler_system


def test_derivative_of_sine():
    x = grid_coordinates(32)[0]
    assert np.max(np.abs(spectral_derivative(np.sin(x)) - np.cos(x))) <= 1e-12


def test_derivative_of_constant_is_zero():
    assert np.all(spectral_derivative(np.full(16, 3.7)) == 0.0)


def test_gradient_2d():
    X, Y = grid_coordinates(32, 2)
    f = np.sin(3 * X) * np.cos(2 * Y)
    assert np.max(np.abs(spectral_derivative(f, 0) - 3 * np.cos(3 * X) * np.cos(2 * Y))) <= 1e-11
    assert np.max(np.abs(spectral_derivative(f, 1) + 2 * np.sin(3 * X) * np.sin(2 * Y))) <= 1e-11


def test_fd4_order():
    errs = []
    for N in (32, 64):
        x = grid_coordinates(N)[0]
        errs.append(np.max(np.abs(fd4_derivative(np.sin(x)) - np.cos(x))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.1)


def test_sobolev_examples():
    assert sobolev_norm(np.ones(16), 0, 1) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-14)
    x = grid_coordinates(16)[0]
    assert sobolev_norm(np.sin(x), 1, 1) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-14)


def test_sobolev_vector_valued_sums_components():
    x = grid_coordinates(16)[0]
    f = np.stack([np.sin(x), np.cos(2 * x)], axis=-1)
    assert sobolev_norm(f, 2, 1) ** 2 == pytest.approx(sobolev_norm(f[:, 0], 2, 1) ** 2 + sobolev_norm(f[:, 1], 2, 1) ** 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_sobolev_monotone_in_k(seed):
    f = np.random.default_rng(seed).normal(size=(16, 16))
    vals = [sobolev_norm(f, k, 2) for k in range(4)]
    assert all(a <= b * (1 + 1e-14) for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("b", [-1.0, 0.5, 2.0])
def test_evolve_scalar_model(b):
    sys = scalar_model_system(b)
    t0, u0 = -0.5, 1.3
    taus = np.linspace(np.log(2), np.log(2) + 4, 9)[1:]
    traj = evolve(sys, FieldState(np.array([u0]), t0, d=0), taus, EvolveControls(fixed_step=1e-3))
    for t, u in zip(traj.times, traj.states):
        assert u[0] == pytest.approx(u0 * (t / t0) ** b, rel=1e-8)


def test_evolve_adaptive_matches_fixed():
    sys = scalar_model_system(0.5, lambda t: t**2)
    taus = [1.0, 2.0, 3.0]
    a = evolve(sys, FieldState(np.array([1.0]), -0.5, d=0), taus, EvolveControls(atol=1e-12))
    b = evolve(sys, FieldState(np.array([1.0]), -0.5, d=0), taus, EvolveControls(fixed_step=1e-3))
    np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=1e-9)


def test_homogeneous_euler_matches_oracle():
    params = FluidParameters(1.8, KasnerBackground(0.3))
    U0 = np.array([1.0, 0.1, -0.05, 0.08])
    N = 8
    state = FieldState(np.tile(U0, (N, 1)), -0.5)
    ts = -np.geomspace(0.5, 1e-4, 7)[1:]
    traj = evolve(euler_system(params), state, -np.log(-ts), EvolveControls(fixed_step=2e-3))
    ref = homogeneous_euler(U0, params, (-0.5, ts[-1]), t_eval=ts)
    assert not traj.truncated
    for j, U in enumerate(traj.states):
        assert np.max(np.abs(U - ref.U[j])) <= 1e-8 * max(1.0, np.max(np.abs(ref.U[j])))
        assert np.ptp(U, axis=0).max() <= 1e-13


def test_zero_data_stays_zero():
    sys = constant_system(np.eye(2), [np.array([[0.0, 1.0], [1.0, 0.0]])], Bc=-np.eye(2))
    traj = evolve(sys, FieldState(np.zeros((16, 2)), -1.0), [0.5, 1.0], EvolveControls(fixed_step=0.01))
    assert all(np.all(s == 0.0) for s in traj.states)


def test_monitor_truncates():
    sys = scalar_model_system(-1.0)
    sys.monitor = lambda t, u: (bool(u[0] < 2.0), "too large")
    traj = evolve(sys, FieldState(np.array([1.0]), -1.0, d=0), [1.0, 2.0], EvolveControls(fixed_step=0.01))
    assert traj.truncated and "too large" in traj.diagnostic


def test_targets_must_be_monotone():
    sys = scalar_model_system(1.0)
    with pytest.raises(ValueError):
        evolve(sys, FieldState(np.array([1.0]), -1.0, d=0), [1.0, 0.5])


def _energy_residual(sys, u0, t0, spacing, span=1.0):
    taus = -np.log(-t0) + spacing * np.arange(1, int(round(span / spacing)) + 1)
    traj = evolve(sys, FieldState(u0, t0, d=sys.d), taus, EvolveControls(fixed_step=spacing / 8))
    return np.max(np.abs(energy_identity_residual(sys, traj)))


def test_energy_identity_constant_system():
    x = grid_coordinates(16)[0]
    u0 = np.stack([np.sin(x), np.cos(2 * x)], axis=-1)
    sys = constant_system(np.eye(2), [np.array([[0.0, 1.0], [1.0, 0.0]])])
    # the energy is conserved exactly, so only round-off remains at any spacing
    assert _energy_residual(sys, u0, -1.0, 0.02) <= 1e-10
    assert _energy_residual(sys, u0, -1.0, 0.01) <= 1e-10


def test_energy_identity_scalar_model():
    sys = scalar_model_system(0.7)
    r1 = _energy_residual(sys, np.array([1.0]), -1.0, 0.02)
    r2 = _energy_residual(sys, np.array([1.0]), -1.0, 0.01)
    assert np.log2(r1 / r2) == pytest.approx(2.0, abs=0.3)


def test_energy_identity_euler_second_order():
    params = FluidParameters(1.8, KasnerBackground(0.0))
    x = grid_coordinates(16)[0]
    u0 = np.zeros((16, 4))
    u0[:, 0] = 1.0
    u0[:, 1] = 0.05 * np.sin(x)
    sys = euler_system(params)
    r1, r2 = _energy_residual(sys, u0, -0.5, 0.04), _energy_residual(sys, u0, -0.5, 0.02)
    assert np.log2(r1 / r2) == pytest.approx(2.0, abs=0.3)
