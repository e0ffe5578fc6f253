import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kasner_fluids.euler_coefficients import (
    LotRecord,
    assemble_full,
    in_window,
    lot_coefficients,
    observables,
    remainder_source,
    residual,
)
from kasner_fluids.fluid_params import FluidParameters
from kasner_fluids.kasner_geometry import KasnerBackground, admissible_K2_interval
from kasner_fluids.ode_oracles import homogeneous_euler

PARAMS = FluidParameters(1.8, KasnerBackground(0.0))


def _random_window_point(rng, width=0.3):
    v0 = rng.uniform(0.5, 2.0)
    d = rng.normal(size=3)
    d *= rng.uniform(0, width) * v0 / np.linalg.norm(d)
    return np.array([v0, *d])


@pytest.mark.parametrize("K, gamma", [(0.0, 1.8), (0.5, 1.9), (0.9, 1.95)])
def test_at_rest_structure(K, gamma):
    params = FluidParameters(gamma, KasnerBackground(K))
    for v0 in (0.7, 1.0, 1.6):
        for t in (-0.8, -1e-3):
            cs = assemble_full(t, np.array([v0, 0, 0, 0]), params)
            np.testing.assert_allclose(cs.B0, v0**3 * np.diag([1, gamma - 1, gamma - 1, gamma - 1]), rtol=1e-12, atol=1e-12)
            Bc = (gamma - 1) * v0**3 * np.diag([0, *params.G])
            np.testing.assert_allclose(cs.Bc, Bc, rtol=1e-12, atol=1e-12)
            # G is a difference of terms of size |B0 v / t|; it vanishes up to their round-off
            cancel = np.max(np.abs(cs.B0 @ np.array([v0, 0, 0, 0]) / t))
            assert np.max(np.abs(cs.G)) <= 1e-14 * max(1.0, cancel)
            assert cs.r == pytest.approx((gamma - 1) * v0**2, rel=1e-12)


def test_B0_00_gives_P0():
    rng = np.random.default_rng(3)
    g = PARAMS.gamma
    for _ in range(100):
        v = _random_window_point(rng)
        cs = assemble_full(-rng.uniform(1e-4, 1), v, PARAMS)
        P0 = v[0] ** 2 + 3 * (g - 1) * np.sum(v[1:] ** 2)
        assert cs.B0[0, 0] / v[0] == pytest.approx(P0, rel=1e-12)


def test_symmetry_random_samples():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        v = _random_window_point(rng)
        cs = assemble_full(-rng.uniform(1e-4, 1), v, PARAMS)
        for M in [cs.B0, *cs.B]:
            worst = max(worst, np.max(np.abs(M - M.T)) / max(1.0, np.max(np.abs(M))))
    assert worst <= 1e-12


def test_B0_positive_in_window():
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = _random_window_point(rng)
        assert in_window(v)
        assert np.min(np.linalg.eigvalsh(assemble_full(-0.3, v, PARAMS, check=True).B0)) > 0


def test_vectorized_assembly_matches_pointwise():
    rng = np.random.default_rng(6)
    vs = np.stack([_random_window_point(rng) for _ in range(5)])
    batch = assemble_full(-0.2, vs, PARAMS)
    for j, v in enumerate(vs):
        one = assemble_full(-0.2, v, PARAMS)
        np.testing.assert_allclose(batch.B0[j], one.B0, rtol=1e-14)
        np.testing.assert_allclose(batch.G[j], one.G, rtol=1e-14, atol=1e-300)


def _record(rng):
    U = _random_window_point(rng, 0.2)
    return LotRecord(U=U, U_t=rng.normal(size=4), U_grad=[rng.normal(size=4) * 0.1 for _ in range(3)])


def test_remainder_zero_u():
    rng = np.random.default_rng(7)
    rec = _record(rng)
    Ft, F0 = remainder_source(-0.3, rec, np.zeros(4), PARAMS, -0.05)
    assert np.all(F0 == 0.0)


def test_remainder_identity():
    rng = np.random.default_rng(8)
    lam = -0.05
    for _ in range(100):
        t = -rng.uniform(1e-3, 1)
        rec = _record(rng)
        u = rng.normal(size=4) * 0.02
        u_t = rng.normal(size=4)
        du = [rng.normal(size=4) for _ in range(3)]
        Ft, F0 = remainder_source(t, rec, u, PARAMS, lam)
        U = rec.U + u
        full = residual(t, U, rec.U_t + u_t, [a + b for a, b in zip(rec.U_grad, du)], PARAMS)
        cs = assemble_full(t, U, PARAMS)
        lhs = cs.B0 @ u_t + sum(B @ g for B, g in zip(cs.B, du)) - cs.Bc @ u / t
        expect = lhs - (-t) ** lam * (Ft + F0)
        assert np.max(np.abs(full - expect)) <= 1e-10 * max(1.0, np.max(np.abs(full)))


def test_exact_homogeneous_solution_has_small_residual():
    params = FluidParameters(1.8, KasnerBackground(0.3))
    U0 = np.array([1.0, 0.05, -0.02, 0.04])
    t = -0.01
    h = 1e-4 * abs(t)
    ts = [t - 2 * h, t - h, t, t + h, t + 2 * h]
    sol = homogeneous_euler(U0, params, (-0.5, t + 2 * h), t_eval=ts, rtol=1e-13, atol=1e-15)
    U = sol.U
    U_t = (U[0] - 8 * U[1] + 8 * U[3] - U[4]) / (12 * h)
    rec = LotRecord(U=U[2], U_t=U_t, U_grad=[np.zeros(4)] * 3)
    Ft, _ = remainder_source(t, rec, np.zeros(4), params, 0.0)
    scale = np.max(np.abs(assemble_full(t, U[2], params).B0 @ U_t))
    assert np.max(np.abs(Ft)) <= 1e-9 * max(1.0, scale)


def test_lot_coefficients_at_rest():
    W = np.array([1.3, 0, 0, 0])
    for t in (-0.1, -1e-3):
        B1, B2, B3, Gh = lot_coefficients(t, W, PARAMS)
        assert np.max(np.abs(Gh)) <= 1e-14 / abs(t)
        nz = {tuple(i) for i in np.argwhere(np.abs(B1) > 0)}
        assert nz == {(0, 1), (1, 0)}


def test_lot_B1_scaling():
    W = np.array([1.3, 0, 0, 0])
    a = lot_coefficients(-0.1, W, PARAMS)[0]
    b = lot_coefficients(-1e-3, W, PARAMS)[0]
    g1 = PARAMS.G[0]
    assert b[0, 1] / a[0, 1] == pytest.approx(0.01**g1, rel=1e-12)
    assert b[1, 0] / a[1, 0] == pytest.approx(0.01**-g1, rel=1e-12)


def _axisymmetric_params():
    # p2 = p3 needs L = 0: vacuum K = 0 or a scalar field on the lower edge of the K^2 interval
    A = 0.4
    lo, _ = admissible_K2_interval(A)
    return [PARAMS, FluidParameters(1.8, KasnerBackground(np.sqrt(lo), A))]


@pytest.mark.parametrize("params", _axisymmetric_params())
def test_lot_y_z_exchange_symmetry(params):
    assert params.G[1] == pytest.approx(params.G[2], abs=1e-7)
    P = np.eye(4)[[0, 1, 3, 2]]
    rng = np.random.default_rng(9)
    for _ in range(20):
        W = _random_window_point(rng, 0.2)
        W[[2, 3]] = W[2], W[2]
        W = rng.permutation([W, P @ W])[0]
        t = -rng.uniform(1e-3, 0.5)
        _, B2, B3, Gh = lot_coefficients(t, W, params)
        _, B2s, B3s, Ghs = lot_coefficients(t, P @ W, params)
        np.testing.assert_allclose(P @ B2 @ P, B3s, rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(P @ Gh, Ghs, rtol=1e-6, atol=1e-10)


def test_observables_comoving():
    params = FluidParameters(1.8, KasnerBackground(0.2))
    c = params.cs2
    for tt in (0.5, 1e-3):
        P, rho, VV, timelike = observables(tt, np.array([tt**c, 0, 0, 0]), params)
        assert -VV == pytest.approx(tt ** (2 * c), rel=1e-14)
        assert P == pytest.approx(c * tt ** (-(1 + c)), rel=1e-12)
        assert P / rho == pytest.approx(c, rel=1e-14)
        assert timelike


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 2.0), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_observables_eos_and_spacelike(tt, V):
    P, rho, VV, timelike = observables(tt, np.asarray(V), PARAMS)
    assert timelike == (VV < 0)
    if timelike:
        assert P / rho == pytest.approx(PARAMS.cs2, rel=1e-12)
    else:
        assert np.isnan(P)
