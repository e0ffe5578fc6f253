"""Symmetric hyperbolic Fuchsian systems and checkers for their hypotheses.

A system is written as

    B0(t, u) u_t + B^i(t, u) d_i u = (1/t) Bc(t, u) u + F(t, u),    t < 0,

on the flat torus. The coefficient callback returns all four pieces at once
so that expensive assemblies are shared.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .quadrature import singular_quadrature

__all__ = [
    "FuchsianSystem",
    "scalar_model_system",
    "constant_system",
    "canonical_transform",
    "HypothesisResult",
    "ConditionReport",
    "max_generalized_eigenvalue",
    "check_forward_conditions",
    "KappaConstants",
    "check_backward_kappa",
    "divergence_map",
]

Coefficients = Tuple[np.ndarray, List[np.ndarray], np.ndarray, np.ndarray]


def _apply(M: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", M, u)


@dataclass
class FuchsianSystem:
    """Coefficient bundle of a Fuchsian system with declared parameters."""

    coefficients: Callable[[float, np.ndarray], Coefficients]
    rank: int = 4
    d: int = 1
    p: float = 1.0
    mu: float = 0.0
    lam: float = 0.0
    q: float = 0.0
    gamma1: float = np.nan
    gamma2: float = np.nan
    R: float = np.inf
    split: Optional[Callable[[float, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None
    monitor: Optional[Callable[[float, np.ndarray], Tuple[bool, str]]] = None
    name: str = "system"

    def evaluate(self, t: float, u) -> Coefficients:
        return self.coefficients(t, np.asarray(u, dtype=float))

    def B0(self, t, u):
        return self.evaluate(t, u)[0]

    def B(self, t, u):
        return self.evaluate(t, u)[1]

    def Bc(self, t, u):
        return self.evaluate(t, u)[2]

    def F(self, t, u):
        return self.evaluate(t, u)[3]

    def alpha(self) -> float:
        """alpha with mu = lam + 1 - (1 + alpha) p."""
        return (self.lam + 1.0 - self.mu) / self.p - 1.0

    def tau_rhs(self, t: float, u: np.ndarray, grads: Sequence[np.ndarray]) -> np.ndarray:
        """du/dtau for tau = -ln(-t): -B0^{-1}[Bc u + t F - t B^i d_i u]."""
        B0, Bs, Bc, F = self.coefficients(t, u)
        rhs = _apply(Bc, u) + t * F
        for Bi, g in zip(Bs, grads):
            rhs = rhs - t * _apply(Bi, g)
        return -np.linalg.solve(B0, rhs[..., None])[..., 0]


def scalar_model_system(b: float, F: Optional[Callable[[float], float]] = None) -> FuchsianSystem:
    """The model equation u' = (b/t) u + F(t) as a rank-one system without space."""

    def coeffs(t, u):
        shape = u.shape[:-1]
        one = np.ones(shape + (1, 1))
        src = np.zeros(shape + (1,)) if F is None else np.full(shape + (1,), float(F(t)))
        return one, [], b * one, src

    return FuchsianSystem(coeffs, rank=1, d=0, name=f"model(b={b})")


def constant_system(B0: np.ndarray, Bs: Sequence[np.ndarray], Bc: Optional[np.ndarray] = None,
                    d: Optional[int] = None) -> FuchsianSystem:
    """Constant coefficient system with F = 0."""
    B0 = np.asarray(B0, dtype=float)
    n = B0.shape[0]
    Bc = np.zeros((n, n)) if Bc is None else np.asarray(Bc, dtype=float)
    Bs = [np.asarray(B, dtype=float) for B in Bs]

    def coeffs(t, u):
        shape = u.shape[:-1]
        bc = lambda M: np.broadcast_to(M, shape + M.shape)
        return bc(B0), [bc(B) for B in Bs], bc(Bc), np.zeros(shape + (n,))

    return FuchsianSystem(coeffs, rank=n, d=len(Bs) if d is None else d, name="constant")


def canonical_transform(sys: FuchsianSystem, pb: float, lb: float) -> FuchsianSystem:
    """Reparameterize time by tb = -(-t)^pb and rescale u = (-tb)^{lb/pb} ub."""
    if pb == 0:
        raise ValueError("the time exponent must be nonzero")

    def coeffs(tb, ub):
        s = -float(tb)
        t = -(s ** (1.0 / pb))
        u = s ** (lb / pb) * ub
        B0, Bs, Bc, F = sys.coefficients(t, u)
        Bbar = [s ** ((1.0 - pb) / pb) * Bi / pb for Bi in Bs]
        Bcbar = (Bc - lb * B0) / pb
        Fbar = s ** ((1.0 - pb - lb) / pb) * F / pb
        return B0, Bbar, Bcbar, Fbar

    monitor = None
    if sys.monitor is not None:
        def monitor(tb, ub):
            s = -float(tb)
            return sys.monitor(-(s ** (1.0 / pb)), s ** (lb / pb) * ub)

    return FuchsianSystem(
        coeffs, rank=sys.rank, d=sys.d,
        p=sys.p / pb, mu=(sys.mu - lb) / pb, lam=(sys.lam + 1.0 - pb - lb) / pb, q=sys.q,
        gamma1=sys.gamma1, gamma2=sys.gamma2, R=sys.R, monitor=monitor,
        name=f"{sys.name}|canonical(p={pb:g},lam={lb:g})",
    )


@dataclass
class HypothesisResult:
    name: str
    margin: float
    passed: bool
    worst_sample: Optional[list] = None
    detail: str = ""


@dataclass
class ConditionReport:
    results: List[HypothesisResult] = field(default_factory=list)
    samples: int = 0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"samples": self.samples, "passed": self.passed,
                "results": [asdict(r) for r in self.results]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def max_generalized_eigenvalue(Bc: np.ndarray, B0: np.ndarray) -> float:
    """Largest lambda with det(Bc_sym - lambda B0) = 0, via a Cholesky reduction of B0."""
    Bs = 0.5 * (Bc + Bc.T)
    Lc = np.linalg.cholesky(B0)
    X = linalg.solve_triangular(Lc, Bs, lower=True)
    Y = linalg.solve_triangular(Lc, X.T, lower=True)
    return float(np.max(np.linalg.eigvalsh(0.5 * (Y + Y.T))))


def check_forward_conditions(sys: FuchsianSystem, cloud: Sequence[Tuple[float, np.ndarray]], T0: float,
                             beta: float = 0.0, bb: float = 0.0, k: int = 0,
                             Ft_norm: Optional[Callable[[float], float]] = None,
                             delta: Optional[float] = None, quad_rtol: float = 1e-10, quad_atol: float = 0.0) -> ConditionReport:
    """Sampled checks of the eigenvalue, positivity and smallness hypotheses.

    ``cloud`` holds (t, v) samples with v a single fiber vector.
    ``Ft_norm`` returns the norm of the F-tilde part at time s.
    """
    cloud = list(cloud)
    if not cloud:
        raise ValueError("empty sample cloud")
    rep = ConditionReport(samples=len(cloud))
    eta = np.inf
    worst = None
    min_b0 = np.inf
    for t, v in cloud:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        B0, _, Bc, _ = sys.coefficients(t, v)
        ev0 = float(np.min(np.linalg.eigvalsh(B0)))
        min_b0 = min(min_b0, ev0)
        if ev0 <= 0:
            worst = [float(t)] + v.tolist()
            eta = -np.inf
            break
        e = sys.mu - max_generalized_eigenvalue(Bc, B0)
        if e < eta:
            eta = e
            worst = [float(t)] + v.tolist()
    rep.results.append(HypothesisResult("B0_positive", min_b0, min_b0 > 0, worst if min_b0 <= 0 else None))
    rep.results.append(HypothesisResult("eigenvalue", float(eta), eta > 0, worst,
                                        "largest eta with Bc <= (mu - eta) B0"))
    gam1 = sys.gamma1 if np.isfinite(sys.gamma1) else 0.0
    pos = 2.0 * eta - gam1 * beta - k * (k + 1) * bb * gam1
    rep.results.append(HypothesisResult("positivity", float(pos), pos > 0, worst,
                                        f"2 eta - gamma1 beta - k(k+1) b gamma1 with beta={beta}, b={bb}, k={k}"))
    if Ft_norm is not None:
        val = singular_quadrature(lambda s: (-s) ** (sys.p - 1.0) * Ft_norm(s), T0, sys.p, rtol=quad_rtol,
                                  atol=quad_atol)
        ok = np.isfinite(val) and (delta is None or val <= delta)
        margin = (delta - val) if delta is not None else float(val)
        rep.results.append(HypothesisResult("smallness", float(margin), bool(ok), None,
                                            f"integral of |s|^(p-1)|F-tilde| over [T0,0) = {val:.6e}"))
    return rep


@dataclass
class KappaConstants:
    kappa: float
    gamma1: float
    lambda3: float = 0.0
    beta: Tuple[float, ...] = (0.0,) * 8
    bb: float = 0.0
    k: int = 0


def check_backward_kappa(c: KappaConstants) -> ConditionReport:
    """kappa > (1/2) gamma1 max{beta1+beta3+beta5+beta7+2 lambda3, beta1+2k(k+1) b}."""
    b = c.beta
    odd = b[1] + b[3] + b[5] + b[7]
    rhs = 0.5 * c.gamma1 * max(odd + 2.0 * c.lambda3, b[1] + 2.0 * c.k * (c.k + 1) * c.bb)
    margin = c.kappa - rhs
    rep = ConditionReport(samples=0)
    rep.results.append(HypothesisResult("kappa", float(margin), margin > 0, None,
                                        f"kappa={c.kappa:.6g}, bound={rhs:.6g}"))
    return rep


def divergence_map(sys: FuchsianSystem, t: float, u, u_t, u_grad: Sequence[np.ndarray],
                   h: float = 1e-6) -> np.ndarray:
    """Div B = dB0/dt (explicit) + D_u B0 . u_t + sum_i D_u B^i . d_i u.

    Directional derivatives use central differences with relative step h.
    Valid for systems whose coefficients depend on x only through u.
    """
    u = np.asarray(u, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    ht = h * max(1.0, abs(t))
    B0p = sys.coefficients(t + ht, u)[0]
    B0m = sys.coefficients(t - ht, u)[0]
    out = (B0p - B0m) / (2.0 * ht)

    def dirder(idx, w, i=None):
        wmax = float(np.max(np.abs(w)))
        if wmax == 0.0:
            return 0.0
        scale = h * max(1.0, float(np.max(np.abs(u)))) / wmax
        cp = sys.coefficients(t, u + scale * w)
        cm = sys.coefficients(t, u - scale * w)
        Mp = cp[0] if idx == 0 else cp[1][i]
        Mm = cm[0] if idx == 0 else cm[1][i]
        return (Mp - Mm) / (2.0 * scale)

    out = out + dirder(0, u_t)
    for i, g in enumerate(u_grad):
        out = out + dirder(1, np.asarray(g, dtype=float), i)
    return out
