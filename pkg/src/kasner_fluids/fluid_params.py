"""Equation of state parameters, fluid exponents and rescaling matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .kasner_geometry import KasnerBackground, velocity_L

__all__ = [
    "FluidDomainError",
    "FluidParameters",
    "gammas",
    "stability_classify",
    "gamma_window",
    "derived_exponents",
    "minimal_ell",
    "remainder_rates",
    "rescaling_T",
    "rescaling_T_inv",
    "rescaling_Th",
    "rescaling_Th_inv",
]

BORDERLINE_TOL = 1e-12


class FluidDomainError(ValueError):
    pass


def gammas(K: float, gamma: float, A: float = 0.0) -> Tuple[float, float, float]:
    """Fluid exponents (G1, G2, G3) for the given background and EOS."""
    if not (1.0 < gamma < 2.0):
        raise FluidDomainError(f"gamma = {gamma} outside (1, 2)")
    L = velocity_L(K, A)
    K2 = float(K) ** 2
    g1 = (3.0 * gamma - 2.0 - K2 * (2.0 - gamma)) / 4.0
    g2 = (3.0 * gamma - 5.0 + 2.0 * L + K2 * (gamma - 1.0)) / 4.0
    g3 = (3.0 * gamma - 5.0 - 2.0 * L + K2 * (gamma - 1.0)) / 4.0
    # cross-check against the exponent form (cs2 - p_i)/(1 - p_1)
    den = 4.0 / (K2 + 3.0)
    p = ((K2 - 1.0) / (K2 + 3.0), 2.0 * (1.0 - L) / (K2 + 3.0), 2.0 * (1.0 + L) / (K2 + 3.0))
    cs2 = gamma - 1.0
    alt = tuple((cs2 - pi) / den for pi in p)
    resid = max(abs(a - b) for a, b in zip(alt, (g1, g2, g3)))
    if resid > 1e-13 * max(1.0, K2):
        raise AssertionError(f"fluid exponent formulas disagree by {resid}")
    return g1, g2, g3


def stability_classify(cs2: float, p, tol: float = BORDERLINE_TOL) -> str:
    """Classify the fluid as stable, borderline, unstable or stiff_excluded."""
    pmax = max(p)
    if cs2 >= 1.0:
        return "stiff_excluded"
    if abs(cs2 - pmax) <= tol:
        return "borderline"
    if cs2 > pmax:
        return "stable"
    return "unstable"


def gamma_window(K: float) -> Tuple[float, float]:
    """Open interval of gamma giving stability on a vacuum background, K in [0, 1)."""
    K2 = K * K
    return (K2 + 2.0 * abs(K) + 5.0) / (K2 + 3.0), 2.0


def derived_exponents(G, ell: int) -> Tuple[float, float, bool]:
    """Return (q, eps, admissible) for fluid exponents G and LOT order ell."""
    g1, _, g3 = G
    q = min(1.0 - g1, 2.0 * g3)
    eps = min(g1 + g3, 1.0, ell * (1.0 - g1), 2.0 * ell * g3) - g1
    admissible = q > 0 and ell > g1 / q
    return q, eps, admissible


def optimal_eps(G) -> float:
    g1, _, g3 = G
    return min(g3, 1.0 - g1)


def minimal_ell(G) -> int:
    """Smallest integer ell with ell > G1/q."""
    g1, _, g3 = G
    q = min(1.0 - g1, 2.0 * g3)
    if q <= 0:
        raise FluidDomainError("q <= 0, fluid not in the stable regime")
    return int(math.floor(g1 / q)) + 1


def remainder_rates(G, ell: int, mu: Optional[float] = None):
    """Step-4 choices: (lam, mu, p) for the remainder system.

    lam = min{1, G1+G3, ell*q} - 1, mu defaults to the midpoint of (G1, lam+1)
    and p = min{1-G1+G3, mu, q, G3}.
    """
    g1, _, g3 = G
    q = min(1.0 - g1, 2.0 * g3)
    lam = min(1.0, g1 + g3, ell * q) - 1.0
    if mu is None:
        mu = 0.5 * (g1 + lam + 1.0)
    if not (g1 < mu < lam + 1.0):
        raise FluidDomainError(f"mu = {mu} not in ({g1}, {lam + 1.0})")
    p = min(1.0 - g1 + g3, mu, q, g3)
    return lam, mu, p


def _check_t(t):
    if np.any(np.asarray(t) >= 0):
        raise FluidDomainError("t must be negative")


def _diag_powers(t, exps):
    _check_t(t)
    s = -np.asarray(t, dtype=float)
    return np.stack([s**e for e in exps], axis=-1)


def rescaling_T(t, G) -> np.ndarray:
    """Diagonal entries of T(t) = diag(|t|^G1, |t|^G1, |t|^G2, |t|^G3)."""
    return _diag_powers(t, (G[0], G[0], G[1], G[2]))


def rescaling_T_inv(t, G) -> np.ndarray:
    return _diag_powers(t, (-G[0], -G[0], -G[1], -G[2]))


def rescaling_Th(t, G) -> np.ndarray:
    """Diagonal entries of T-hat(t) = diag(1, |t|^-G1, |t|^-G2, |t|^-G3)."""
    return _diag_powers(t, (0.0, -G[0], -G[1], -G[2]))


def rescaling_Th_inv(t, G) -> np.ndarray:
    return _diag_powers(t, (0.0, G[0], G[1], G[2]))


def rescaling_Th_dt(t, G) -> np.ndarray:
    """Diagonal entries of the t-derivative of T-hat."""
    _check_t(t)
    s = -np.asarray(t, dtype=float)
    exps = (0.0, -G[0], -G[1], -G[2])
    # d/dt s^e = -e s^(e-1)
    return np.stack([-e * s ** (e - 1.0) for e in exps], axis=-1)


@dataclass(frozen=True)
class FluidParameters:
    """Linear equation of state P = (gamma-1) rho on a Kasner background."""

    gamma: float
    bg: KasnerBackground
    ell: Optional[int] = None
    cs2: float = field(init=False)
    G: Tuple[float, float, float] = field(init=False)
    q: float = field(init=False)
    eps: float = field(init=False)
    regime: str = field(init=False)

    def __post_init__(self):
        G = gammas(self.bg.K, self.gamma, self.bg.A)
        object.__setattr__(self, "cs2", self.gamma - 1.0)
        object.__setattr__(self, "G", G)
        regime = stability_classify(self.gamma - 1.0, self.bg.p)
        object.__setattr__(self, "regime", regime)
        q = min(1.0 - G[0], 2.0 * G[2])
        object.__setattr__(self, "q", q)
        ell = self.ell
        if ell is None:
            ell = minimal_ell(G) if regime == "stable" else 1
            object.__setattr__(self, "ell", ell)
        _, eps, _ = derived_exponents(G, ell)
        object.__setattr__(self, "eps", eps)

    @property
    def stable(self) -> bool:
        return self.regime == "stable"

    @property
    def admissible(self) -> bool:
        return self.stable and derived_exponents(self.G, self.ell)[2]

    @property
    def eps0(self) -> float:
        return optimal_eps(self.G)

    def with_ell(self, ell: int) -> "FluidParameters":
        return FluidParameters(self.gamma, self.bg, ell)
