"""Kasner and Kasner-scalar-field background geometry.

The background is written in the coordinates (t, x, y, z) with t < 0 and
metric

    g = (-t)^{(K^2-1)/2} (-dt^2 + dx^2) + (-t)^{1-L} dy^2 + (-t)^{1+L} dz^2,

where L = K for vacuum backgrounds and L is the modified velocity for the
scalar-field family. The classical Kasner form with time tilde-t > 0 is
reached through :func:`coordinate_transform`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

__all__ = [
    "GeometryDomainError",
    "KasnerBackground",
    "velocity_L",
    "admissible_K2_interval",
    "exponents_from_K",
    "normalize_K",
    "coordinate_transform",
    "metric_exponents",
    "metric_christoffels",
    "frame_components",
    "frame_to_vector",
]

SQRT_2_3 = np.sqrt(2.0 / 3.0)


class GeometryDomainError(ValueError):
    """Raised when a geometric quantity is requested outside its domain."""


def admissible_K2_interval(A: float) -> Tuple[float, float]:
    """Interval of K^2 for which the scalar-field velocity L is real.

    For A = 0 every K is admissible and (0, inf) is returned.
    """
    A2 = float(A) ** 2
    if A2 > 2.0 / 3.0 + 1e-15:
        raise GeometryDomainError(f"|A| = {abs(A)} exceeds sqrt(2/3)")
    if A2 == 0.0:
        return 0.0, np.inf
    disc = 2.0 * np.sqrt(2.0) * np.sqrt(max(2.0 - 3.0 * A2, 0.0))
    # rationalized form of (4 - 3A^2 - disc)/A^2, free of cancellation for small A
    lo = 9.0 * A2 / (4.0 - 3.0 * A2 + disc)
    hi = (4.0 - 3.0 * A2 + disc) / A2
    return lo, hi


def velocity_L(K: float, A: float = 0.0) -> float:
    """Modified asymptotic velocity L; equals |K| when A = 0, signed like K."""
    K = float(K)
    A = float(A)
    if A == 0.0:
        return K
    lo, hi = admissible_K2_interval(A)
    K2 = K * K
    # small slack so that interval endpoints evaluate cleanly
    slack = 1e-12 * max(1.0, hi)
    if K2 < lo - slack:
        raise GeometryDomainError(f"K^2 = {K2} below admissible lower bound {lo} for A = {A}")
    if K2 > hi + slack:
        raise GeometryDomainError(f"K^2 = {K2} above admissible upper bound {hi} for A = {A}")
    L2 = K2 - (3.0 * A * A / 24.0) * (3.0 + K2) ** 2
    L = np.sqrt(max(L2, 0.0))
    return float(np.copysign(L, K)) if K != 0.0 else float(L)


def exponents_from_K(K: float, A: float = 0.0) -> Tuple[float, float, float]:
    """Kasner exponents (p1, p2, p3) parameterized by the asymptotic velocity."""
    L = velocity_L(K, A)
    K2 = float(K) ** 2
    den = K2 + 3.0
    return ((K2 - 1.0) / den, 2.0 * (1.0 - L) / den, 2.0 * (1.0 + L) / den)


@dataclass(frozen=True)
class KasnerBackground:
    """Kasner (A = 0) or Kasner-scalar-field background."""

    K: float
    A: float = 0.0
    L: float = field(init=False)
    p: Tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        if abs(self.A) > SQRT_2_3 + 1e-15:
            raise GeometryDomainError(f"|A| = {abs(self.A)} exceeds sqrt(2/3)")
        object.__setattr__(self, "L", velocity_L(self.K, self.A))
        object.__setattr__(self, "p", exponents_from_K(self.K, self.A))

    def relation_residual(self) -> float:
        p = np.asarray(self.p)
        return abs(p.sum() - 1.0) + abs((p * p).sum() - (1.0 - self.A**2))


def _perm_compose(first, second):
    # applying `first` then `second` to index tuples
    return tuple(first[second[i]] for i in range(3))


def normalize_K(K: float) -> Tuple[float, Tuple[int, int, int]]:
    """Map K to the representative K' in [0, 1).

    Returns (K', perm) such that exponents_from_K(K')[i] equals
    exponents_from_K(K)[perm[i]].
    """
    K = float(K)
    if not np.isfinite(K):
        raise GeometryDomainError("K must be finite")
    if abs(abs(K) - 1.0) < 1e-14:
        raise GeometryDomainError("K = +-1 is an excluded parameter value")
    perm = (0, 1, 2)
    if K < 0:
        K = -K
        perm = _perm_compose(perm, (0, 2, 1))
    if K > 3.0:
        K = (K - 3.0) / (1.0 + K)
        perm = _perm_compose(perm, (1, 2, 0))
    elif K > 1.0:
        K = (3.0 - K) / (1.0 + K)
        perm = _perm_compose(perm, (1, 0, 2))
    return K, perm


def coordinate_transform(value, direction: str, K: float, A: float = 0.0):
    """Map between (t, x, y, z) and the classical Kasner coordinates.

    ``value`` is either a time (scalar or array) or a point (t, x, y, z).
    ``direction`` is "to_tilde" or "from_tilde".
    """
    K2 = float(K) ** 2
    c = (K2 + 3.0) / 4.0
    p = np.asarray(exponents_from_K(K, A))
    arr = np.asarray(value, dtype=float)
    is_point = arr.ndim >= 1 and arr.shape[-1] == 4 and not np.isscalar(value)
    times = arr[..., 0] if is_point else arr
    if direction == "to_tilde":
        if np.any(times >= 0):
            raise GeometryDomainError("t must be negative")
        new_t = (-times) ** c / c
        scale = c**p
    elif direction == "from_tilde":
        if np.any(times <= 0):
            raise GeometryDomainError("tilde t must be positive")
        new_t = -((c * times) ** (1.0 / c))
        scale = c ** (-p)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if not is_point:
        return float(new_t) if np.ndim(new_t) == 0 else new_t
    out = np.empty_like(arr)
    out[..., 0] = new_t
    out[..., 1:] = arr[..., 1:] * scale
    return out


def metric_exponents(bg: KasnerBackground) -> np.ndarray:
    """Exponents e with |g_mumu| = (-t)^{e_mu}."""
    e0 = (bg.K**2 - 1.0) / 2.0
    return np.array([e0, e0, 1.0 - bg.L, 1.0 + bg.L])


_SIGNS = np.array([-1.0, 1.0, 1.0, 1.0])


def metric_christoffels(t: float, bg: KasnerBackground):
    """Diagonal metric and Christoffel symbols Gamma[alpha, beta, gamma] at t < 0."""
    if t >= 0:
        raise GeometryDomainError("t must be negative")
    e = metric_exponents(bg)
    s = -float(t)
    g = _SIGNS * s**e
    chris = np.zeros((4, 4, 4))
    # only t-derivatives are nonzero: d_t g_mm = e_m g_m / t
    dg = e * g / t
    chris[0, 0, 0] = dg[0] / (2.0 * g[0])
    for i in range(1, 4):
        chris[i, 0, i] = chris[i, i, 0] = dg[i] / (2.0 * g[i])
        chris[0, i, i] = -dg[i] / (2.0 * g[0])
    return np.diag(g), chris


def frame_components(t_tilde, V, bg: KasnerBackground, cs2: float):
    """Frame components (W^0..W^3) of a tilde-coordinate vector V."""
    tt = np.asarray(t_tilde, dtype=float)
    if np.any(tt <= 0):
        raise GeometryDomainError("tilde t must be positive")
    V = np.asarray(V, dtype=float)
    p = np.asarray(bg.p)
    W = np.empty_like(V)
    W[..., 0] = tt ** (-cs2) * V[..., 0]
    for i in range(3):
        W[..., i + 1] = tt ** (2.0 * p[i] - 2.0 * cs2) * V[..., i + 1]
    return W


def frame_to_vector(t_tilde, W, bg: KasnerBackground, cs2: float):
    """Inverse of :func:`frame_components`."""
    tt = np.asarray(t_tilde, dtype=float)
    if np.any(tt <= 0):
        raise GeometryDomainError("tilde t must be positive")
    W = np.asarray(W, dtype=float)
    p = np.asarray(bg.p)
    V = np.empty_like(W)
    V[..., 0] = tt**cs2 * W[..., 0]
    for i in range(3):
        V[..., i + 1] = tt ** (2.0 * cs2 - 2.0 * p[i]) * W[..., i + 1]
    return V
