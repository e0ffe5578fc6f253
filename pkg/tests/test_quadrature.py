import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kasner_fluids.quadrature import QuadratureError, singular_quadrature


def test_power_085():
    val = singular_quadrature(lambda s: abs(s) ** -0.85, -0.5, 0.15)
    assert val == pytest.approx(0.5**0.15 / 0.15, rel=1e-10)


def test_constant():
    assert singular_quadrature(lambda s: 1.0, -1.0, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_power_02():
    val = singular_quadrature(lambda s: abs(s) ** (2 * 0.1 - 1), -0.25, 0.2)
    assert val == pytest.approx(0.25**0.2 / 0.2, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(1e-3, 3.0))
def test_power_family(a, T):
    # a_min below the true exponent is allowed
    val = singular_quadrature(lambda s: abs(s) ** (a - 1.0), -T, min(a, 0.5))
    assert val == pytest.approx(T**a / a, rel=1e-9)


def test_log_factor():
    # int_0^1 |s|^{-1/2} log|s| ds = -4
    val = singular_quadrature(lambda s: abs(s) ** -0.5 * np.log(abs(s)), -1.0, 0.4)
    assert val == pytest.approx(-4.0, rel=1e-9)


def test_non_integrable_raises():
    with pytest.raises(QuadratureError):
        singular_quadrature(lambda s: abs(s) ** -1.05, -1.0, 0.1)


@pytest.mark.parametrize("t, a", [(0.1, 0.5), (-0.1, 0.0)])
def test_domain(t, a):
    with pytest.raises(ValueError):
        singular_quadrature(lambda s: 1.0, t, a)
