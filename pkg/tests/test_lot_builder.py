import numpy as np
import pytest

from kasner_fluids.fluid_params import FluidParameters
from kasner_fluids.grid_solver import grid_coordinates
from kasner_fluids.kasner_geometry import KasnerBackground
from kasner_fluids.lot_builder import (
    LotConfigurationError,
    build_lot,
    lot_residual_rates,
    predicted_difference_exponent,
)


@pytest.fixture(scope="module")
def params():
    return FluidParameters(1.8, KasnerBackground(0.0)).with_ell(4)


def _data(N, v0=None, v1=None):
    x = grid_coordinates(N)[0]
    v = np.zeros((N, 4))
    v[:, 0] = 1.0 if v0 is None else v0(x)
    if v1 is not None:
        v[:, 1] = v1(x)
    return v


def test_predicted_exponents_reference():
    G = (0.85, 0.1, 0.1)
    np.testing.assert_allclose([predicted_difference_exponent(G, m) for m in (1, 2, 3)], [0.15, 0.30, 0.45])


def test_constant_data_is_fixed_point(params):
    seq = build_lot(_data(16), 4, params, -0.5, keep_all=True, tau_max=12.0)
    # the rest state is a fixed point up to the round-off of G at rest
    assert np.max(np.abs(seq.last)) <= 1e-13
    assert np.max(seq.diff_norms) <= 1e-13
    assert all(r["skipped"] for r in lot_residual_rates(seq))


def test_ell_one_returns_seed(params):
    v = _data(16, v1=lambda x: 0.1 * np.sin(x))
    seq = build_lot(v, 1, params, -0.5, tau_max=8.0)
    np.testing.assert_array_equal(seq.W(-0.01), v)
    rec = seq.record(-0.25)
    np.testing.assert_allclose(rec.U[:, 0], v[:, 0])


def test_first_difference_rate_generic_data(params):
    # W^0 varying switches on the |t|^{-G1} d_x W^0 coupling, for which the first rate is sharp
    v = _data(32, v0=lambda x: 1.0 + 0.1 * np.cos(x), v1=lambda x: 0.1 * np.sin(x))
    seq = build_lot(v, 2, params, -0.5)
    r = lot_residual_rates(seq)[0]
    assert r["slope"] == pytest.approx(0.15, rel=0.2)


def test_member_converges_to_seed(params):
    v = _data(32, v0=lambda x: 1.0 + 0.1 * np.cos(x))
    seq = build_lot(v, 2, params, -0.5)
    near = np.max(np.abs(seq.W(-1e-9) - v))
    far = np.max(np.abs(seq.W(-1e-2) - v))
    assert near < far
    assert near < 0.1


def test_record_derivative_consistent(params):
    v = _data(32, v0=lambda x: 1.0 + 0.1 * np.cos(x), v1=lambda x: 0.1 * np.sin(x))
    seq = build_lot(v, 3, params, -0.5, dtau=0.02)
    t, h = -0.05, 1e-5
    rec = seq.record(t)
    fd = (seq.record(t + h).U - seq.record(t - h).U) / (2 * h)
    np.testing.assert_allclose(rec.U_t, fd, rtol=1e-4, atol=1e-6 * np.max(np.abs(fd)))


def test_keep_all_required_for_members(params):
    seq = build_lot(_data(8), 2, params, -0.5, tau_max=5.0)
    with pytest.raises(ValueError):
        seq.member(0, 0)


def test_nonintegrable_configuration_raises():
    # unstable regime (G3 < 0): the W^3 coupling grows at t -> 0
    p = FluidParameters(1.2, KasnerBackground(0.0), ell=2)
    v = _data(16, v0=lambda x: 1.0 + 0.1 * np.cos(x))
    v[:, 3] = 0.1 * np.sin(grid_coordinates(16)[0])
    with pytest.raises(LotConfigurationError):
        build_lot(v, 2, p, -0.5, tau_max=10.0)


def test_rejects_bad_input(params):
    with pytest.raises(ValueError):
        build_lot(_data(8), 0, params, -0.5)
    v = _data(8)
    v[0, 0] = -1.0
    with pytest.raises(ValueError):
        build_lot(v, 2, params, -0.5)
