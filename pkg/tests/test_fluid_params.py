import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kasner_fluids.fluid_params import (
    FluidDomainError,
    FluidParameters,
    derived_exponents,
    gamma_window,
    gammas,
    minimal_ell,
    remainder_rates,
    rescaling_T,
    rescaling_T_inv,
    rescaling_Th,
    rescaling_Th_inv,
    stability_classify,
)
from kasner_fluids.kasner_geometry import KasnerBackground, exponents_from_K


def test_gammas_reference_case():
    np.testing.assert_allclose(gammas(0.0, 1.8), (0.85, 0.10, 0.10), atol=1e-15)


@pytest.mark.parametrize("gamma", [1.2, 1.5, 1.8])
def test_gammas_isotropic_scalar_field(gamma):
    G = gammas(np.sqrt(3.0), gamma, np.sqrt(2.0 / 3.0))
    np.testing.assert_allclose(G, [(3 * gamma - 4) / 2] * 3, atol=1e-7)


def test_gamma1_exponent_form_exact():
    # G_i = (cs2 - p_i)(K^2+3)/4, and (K^2+3)/4 = 1/(1-p1)
    K, gamma = 0.5, 1.9
    p = exponents_from_K(K)
    assert 1 / (1 - p[0]) == pytest.approx((K**2 + 3) / 4, rel=1e-15)
    np.testing.assert_allclose(gammas(K, gamma), [(0.9 - pi) / (1 - p[0]) for pi in p], rtol=1e-13)


def test_gamma_outside_range():
    with pytest.raises(FluidDomainError):
        gammas(0.0, 2.0)
    with pytest.raises(FluidDomainError):
        gammas(0.0, 1.0)


def test_classify_examples():
    assert stability_classify(0.9, exponents_from_K(0.0)) == "stable"
    for K in (0.0, 0.4, 0.9):
        assert stability_classify(1 / 3, exponents_from_K(K)) == "unstable"
    assert stability_classify(1 / 3, (1 / 3, 1 / 3, 1 / 3)) == "borderline"
    assert stability_classify(1.0, (1 / 3, 1 / 3, 1 / 3)) == "stiff_excluded"


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(1.01, 1.99))
def test_window_agrees_with_classification(K, gamma):
    lo, _ = gamma_window(K)
    regime = stability_classify(gamma - 1, exponents_from_K(K))
    if gamma > lo + 1e-9:
        assert regime == "stable"
    elif gamma < lo - 1e-9:
        assert regime == "unstable"


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(1.01, 1.99))
def test_stable_iff_positive_G3(K, gamma):
    G = gammas(K, gamma)
    stable = stability_classify(gamma - 1, exponents_from_K(K)) == "stable"
    if abs(G[2]) > 1e-9:
        assert stable == (G[2] > 0)


def test_derived_exponents_ell7():
    q, eps, ok = derived_exponents((0.85, 0.1, 0.1), 7)
    assert q == pytest.approx(0.15)
    assert eps == pytest.approx(0.10)
    assert ok


def test_derived_exponents_ell6():
    _, eps, ok = derived_exponents((0.85, 0.1, 0.1), 6)
    assert eps == pytest.approx(0.05)
    assert ok


def test_inadmissible_ell():
    # G1/q = 5.67, so ell = 5 is not admissible
    assert not derived_exponents((0.85, 0.1, 0.1), 5)[2]
    assert minimal_ell((0.85, 0.1, 0.1)) == 6


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(0.0, 1.0))
def test_large_ell_gives_optimal_eps(K, u):
    lo, _ = gamma_window(K)
    gamma = lo + (2 - lo) * (0.02 + 0.96 * u)
    G = gammas(K, gamma)
    q = min(1 - G[0], 2 * G[2])
    ell = math.ceil(G[0] / q + 1)
    _, eps, _ = derived_exponents(G, ell)
    assert eps == pytest.approx(min(G[2], 1 - G[0]), abs=1e-12)


def test_remainder_rates_reference():
    lam, mu, p = remainder_rates((0.85, 0.1, 0.1), 7)
    assert lam == pytest.approx(-0.05)
    assert mu == pytest.approx(0.9)
    assert p == pytest.approx(0.1)
    with pytest.raises(FluidDomainError):
        remainder_rates((0.85, 0.1, 0.1), 7, mu=0.8)


def test_rescalings_at_minus_one():
    G = (0.85, 0.1, 0.1)
    for f in (rescaling_T, rescaling_T_inv, rescaling_Th, rescaling_Th_inv):
        np.testing.assert_array_equal(f(-1.0, G), np.ones(4))


def test_T00_power():
    assert rescaling_T(-0.01, (0.85, 0.1, 0.1))[0] == pytest.approx(0.01**0.85, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 10.0), st.floats(0.0, 1.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_rescaling_inverses(s, g1, g2, g3):
    G = (g1, g2, g3)
    np.testing.assert_allclose(rescaling_T(-s, G) * rescaling_T_inv(-s, G), 1.0, rtol=1e-13)
    np.testing.assert_allclose(rescaling_Th(-s, G) * rescaling_Th_inv(-s, G), 1.0, rtol=1e-13)


def test_rescaling_rejects_positive_time():
    with pytest.raises(FluidDomainError):
        rescaling_T(0.1, (0.85, 0.1, 0.1))


def test_parameters_defaults():
    p = FluidParameters(1.8, KasnerBackground(0.0))
    assert p.regime == "stable"
    assert p.ell == 6
    assert p.cs2 == pytest.approx(0.8)
    assert p.with_ell(7).eps == pytest.approx(0.10)
    assert p.with_ell(7).admissible
