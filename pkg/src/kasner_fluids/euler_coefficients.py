"""Coefficients of the rescaled relativistic Euler system on a Kasner background.

The unknown is U = T(t)^{-1} V where V^alpha is the fluid vector in the
coordinates (t, x, y, z) and T(t) = diag(|t|^G1, |t|^G1, |t|^G2, |t|^G3).
The covariant Euler equations A^delta_{alpha beta} nabla_delta V^beta = 0 are
multiplied through by

    M = -cs2 (-t)^{-(K^2-1) - 5 G1} V_lambda V^lambda

and sandwiched with T, which yields the symmetric system

    B0(U) dU/dt + B^i(t, U) d_i U = (1/t) Bc(U) U + G(t, U).

All arrays are vectorized over leading axes: ``v`` has shape (..., 4).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .fluid_params import FluidParameters, rescaling_T, rescaling_Th
from .kasner_geometry import metric_christoffels, metric_exponents

__all__ = [
    "HyperbolicityError",
    "CoefficientSet",
    "euler_tensor",
    "assemble_full",
    "source_terms",
    "in_window",
    "residual",
    "remainder_source",
    "LotRecord",
    "lot_coefficients",
    "lot_rhs",
    "observables",
]

PROJ = np.array([0.0, 1.0, 1.0, 1.0])


class HyperbolicityError(ValueError):
    """B0 failed to be positive definite at some sample point."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass
class CoefficientSet:
    """Coefficients evaluated at (t, v); leading axes follow v."""

    B0: np.ndarray
    B: List[np.ndarray]
    Bc: np.ndarray
    G: np.ndarray
    r: np.ndarray
    t: float

    @property
    def B1(self):
        return self.B[0]

    @property
    def B2(self):
        return self.B[1]

    @property
    def B3(self):
        return self.B[2]

    def source(self, v: np.ndarray) -> np.ndarray:
        """Right-hand side (1/t) Bc v + G."""
        return np.einsum("...ij,...j->...i", self.Bc, v) / self.t + self.G


def euler_tensor(V: np.ndarray, gdiag: np.ndarray, cs2: float) -> np.ndarray:
    """A^delta_{alpha beta}(V) with shape (..., 4[delta], 4[alpha], 4[beta])."""
    Vl = gdiag * V
    VV = np.sum(Vl * V, axis=-1)
    k = (3.0 * cs2 + 1.0) / cs2
    outer = np.einsum("...a,...b->...ab", Vl, Vl) / VV[..., None, None]
    A = -k * np.einsum("...d,...ab->...dab", V, outer)
    A = A + np.einsum("...d,ab->...dab", V, np.diag(gdiag))
    eye = np.eye(4)
    # delta^d_b V_a + delta^d_a V_b
    A = A + np.einsum("db,...a->...dab", eye, Vl) + np.einsum("da,...b->...dab", eye, Vl)
    return A


def _prefactors(t: float, params: FluidParameters):
    bg = params.bg
    s = -float(t)
    G1 = params.G[0]
    mult_power = s ** (-(bg.K**2 - 1.0) - 5.0 * G1)
    r_power = s ** (-(bg.K**2 - 1.0) / 2.0 - 2.0 * G1)
    return mult_power, r_power


def assemble_full(t: float, v, params: FluidParameters, check: bool = False) -> CoefficientSet:
    """Evaluate B0, B^i, Bc and G of the rescaled Euler system at (t, v)."""
    v = np.asarray(v, dtype=float)
    t = float(t)
    g, chris = metric_christoffels(t, params.bg)
    gdiag = np.diag(g).copy()
    Td = rescaling_T(t, params.G)
    V = Td * v
    cs2 = params.cs2
    A = euler_tensor(V, gdiag, cs2)
    VV = np.sum(gdiag * V * V, axis=-1)
    mult_power, r_power = _prefactors(t, params)
    M = -cs2 * mult_power * VV
    TT = np.outer(Td, Td)
    Bfull = M[..., None, None, None] * A * TT
    B0 = Bfull[..., 0, :, :]
    B = [Bfull[..., i, :, :] for i in range(1, 4)]
    # dT/dt U = (Gdiag/t) V ; Christoffel term sum_d A^d_{ab} Gamma^b_{de} V^e
    Gdiag = np.array([params.G[0], params.G[0], params.G[1], params.G[2]])
    time_part = np.einsum("...ab,...b->...a", A[..., 0, :, :], Gdiag * V / t)
    chris_part = np.einsum("...dab,bde,...e->...a", A, chris, V)
    R = -M[..., None] * Td * (time_part + chris_part)
    r = -cs2 * VV * r_power
    Bc = (r * v[..., 0])[..., None, None] * np.diag(Gdiag * PROJ)
    Gsrc = R - np.einsum("...ij,...j->...i", Bc, v) / t
    if check:
        lam = np.linalg.eigvalsh(B0)
        mn = float(np.min(lam[..., 0]))
        if not mn > 0:
            raise HyperbolicityError(f"outside hyperbolicity window: min eigenvalue of B0 = {mn:.3e}", mn)
    return CoefficientSet(B0=B0, B=B, Bc=Bc, G=Gsrc, r=r, t=t)


def source_terms(t: float, v, params: FluidParameters) -> np.ndarray:
    """Full right-hand side (1/t) Bc v + G at (t, v)."""
    return assemble_full(t, v, params).source(np.asarray(v, dtype=float))


def in_window(v, width: float = 0.3) -> np.ndarray:
    """Pointwise flag for |P v| <= width * v0 with v0 > 0."""
    v = np.asarray(v, dtype=float)
    spatial = np.sqrt(np.sum(v[..., 1:] ** 2, axis=-1))
    return (v[..., 0] > 0) & (spatial <= width * v[..., 0])


def residual(t: float, U, U_t, U_grad: List[np.ndarray], params: FluidParameters) -> np.ndarray:
    """B0 U_t + B^i d_i U - (1/t) Bc U - G evaluated with the coefficients at U."""
    cs = assemble_full(t, U, params)
    out = np.einsum("...ij,...j->...i", cs.B0, U_t) - cs.source(np.asarray(U, dtype=float))
    for Bi, dU in zip(cs.B, U_grad):
        out = out + np.einsum("...ij,...j->...i", Bi, dU)
    return out


def remainder_source(t: float, star, u, params: FluidParameters, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Split source (F_tilde, F0) of the remainder system for U = U_star + u.

    ``star`` is a :class:`LotRecord` (or any object with attributes U, U_t
    and U_grad at time t). The remainder system reads

        B0(U) u_t + B^i(U) d_i u = (1/t) Bc(U) u + (-t)^lam (F_tilde + F0)

    with F_tilde = -(-t)^{-lam} Res(U_star) and F0 vanishing at u = 0.
    """
    U_star = np.asarray(star.U, dtype=float)
    u = np.asarray(u, dtype=float)
    s_lam = (-t) ** (-lam)
    res_star = residual(t, U_star, star.U_t, star.U_grad, params)
    F_tilde = -s_lam * res_star
    if not np.any(u):
        return F_tilde, np.zeros_like(F_tilde)
    U = U_star + u
    cs = assemble_full(t, U, params)
    # F = (1/t) Bc(U) U_star + G(U) - B0(U) U_star_t - B^i(U) d_i U_star
    F = np.einsum("...ij,...j->...i", cs.Bc, U_star) / t + cs.G
    F = F - np.einsum("...ij,...j->...i", cs.B0, star.U_t)
    for Bi, dU in zip(cs.B, star.U_grad):
        F = F - np.einsum("...ij,...j->...i", Bi, dU)
    F0 = s_lam * F - F_tilde
    return F_tilde, F0


@dataclass
class LotRecord:
    """Leading-order data at one time: U_star, its t-derivative and gradients."""

    U: np.ndarray
    U_t: np.ndarray
    U_grad: List[np.ndarray]


def lot_coefficients(t: float, W, params: FluidParameters):
    """Coefficients (Bh^1, Bh^2, Bh^3, Gh) of the system dW/dt + Bh^i d_i W = Gh.

    Here W = T-hat U. Computed numerically from :func:`assemble_full`.
    """
    W = np.asarray(W, dtype=float)
    Th = rescaling_Th(t, params.G)
    Thi = 1.0 / Th
    U = Thi * W
    cs = assemble_full(t, U, params)
    Bh = []
    for Bi in cs.B:
        X = np.linalg.solve(cs.B0, Bi)
        Bh.append(Th[:, None] * X * Thi[None, :])
    D = np.array([0.0, params.G[0], params.G[1], params.G[2]])
    # (1/t) T-hat B0^{-1} (Bc - B0 D) U + T-hat B0^{-1} G, using dT-hat/dt U = -(1/t) D W
    BcU = np.einsum("...ij,...j->...i", cs.Bc, U) - np.einsum("...ij,...j->...i", cs.B0, D * U)
    rhs = BcU / t + cs.G
    Gh = Th * np.linalg.solve(cs.B0, rhs[..., None])[..., 0]
    return Bh[0], Bh[1], Bh[2], Gh


def lot_rhs(t: float, W, W_grad: List[np.ndarray], params: FluidParameters) -> np.ndarray:
    """F-hat = -Bh^i d_i W + Gh; ``W_grad`` lists the available spatial derivatives."""
    B1, B2, B3, Gh = lot_coefficients(t, W, params)
    out = Gh.copy()
    for Bi, dW in zip((B1, B2, B3), W_grad):
        out -= np.einsum("...ij,...j->...i", Bi, dW)
    return out


def observables(t_tilde, V, params: FluidParameters, rho0: float = 1.0):
    """Pressure, density, V.V and timelike flag for a tilde-coordinate vector V.

    The tilde metric is -dT^2 + sum T^{2 p_i} dX_i^2.
    """
    tt = np.asarray(t_tilde, dtype=float)
    V = np.asarray(V, dtype=float)
    p = np.asarray(params.bg.p)
    VV = -V[..., 0] ** 2
    for i in range(3):
        VV = VV + tt ** (2.0 * p[i]) * V[..., i + 1] ** 2
    timelike = VV < 0
    cs2 = params.cs2
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(timelike, rho0 * np.abs(VV) ** (-(cs2 + 1.0) / (2.0 * cs2)), np.nan)
    P = cs2 * rho
    if np.ndim(P) == 0:
        return float(P), float(rho), float(VV), bool(timelike)
    return P, rho, VV, timelike


def coordinate_vv(t: float, v, params: FluidParameters) -> np.ndarray:
    """V_lambda V^lambda for V = T(t) v in the (t, x, y, z) coordinates."""
    g, _ = metric_christoffels(t, params.bg)
    V = rescaling_T(t, params.G) * np.asarray(v, dtype=float)
    return np.sum(np.diag(g) * V * V, axis=-1)


def pushforward_tilde(t: float, V, params: FluidParameters, future: bool = True):
    """Map a coordinate vector at t < 0 to the classical Kasner coordinates.

    The time coordinates run in opposite directions, so the Jacobian has a
    negative time entry; with ``future`` the vector is also negated, which is
    a symmetry of the Euler equations, so that its time component is positive.
    """
    K2 = params.bg.K ** 2
    c = (K2 + 3.0) / 4.0
    s = -float(t)
    J = np.empty(4)
    J[0] = -(s ** ((K2 - 1.0) / 4.0))
    J[1:] = c ** np.asarray(params.bg.p)
    out = J * np.asarray(V, dtype=float)
    return -out if future else out


def metric_exponent_vector(params: FluidParameters) -> np.ndarray:
    return metric_exponents(params.bg)
