"""Leading-order terms built by iterated singular integration.

With W = T-hat U the rescaled Euler system reads dW/dt = F-hat(W, dW) where
F-hat = -Bh^i d_i W + Gh. Starting from W_0 = v_star the members

    W_{m+1}(t) = v_star - int_t^0 F-hat(W_m)(s) ds

are stored as w_m = W_m - v_star on a uniform grid in tau = -ln(-t), that is a
geometric grid in t clustered at 0. In tau the integral becomes
int_tau^inf h_m(sigma) d sigma with h_m = |t| F-hat(W_m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .euler_coefficients import LotRecord, lot_rhs
from .fluid_params import FluidParameters, rescaling_Th_inv
from .grid_solver import gradient, sobolev_norm
from .quadrature import QuadratureError, singular_quadrature

__all__ = [
    "LotConfigurationError",
    "LotSequence",
    "build_lot",
    "lot_residual_rates",
    "predicted_difference_exponent",
    "singular_quadrature",
    "QuadratureError",
]


class LotConfigurationError(ValueError):
    """Raised when the iteration integrand is not integrable at t = 0."""


def predicted_difference_exponent(G, m: int) -> float:
    """min{(m-1) q + 1 - G1, (m-1) q + 2 G3} for the m-th member difference."""
    g1, _, g3 = G
    q = min(1.0 - g1, 2.0 * g3)
    return min((m - 1) * q + 1.0 - g1, (m - 1) * q + 2.0 * g3)


def _tail_rate(taus: np.ndarray, h: np.ndarray, span: float, floor: float) -> Optional[float]:
    """Exponential decay rate of the norm of h over the last ``span`` of tau.

    Returns None when h vanishes identically and inf when the tail is below
    the round-off ``floor`` so that no tail correction is applied.
    """
    j = int(np.searchsorted(taus, taus[-1] - span))
    n_end = np.sqrt(np.mean(h[-1] ** 2))
    n_mid = np.sqrt(np.mean(h[j] ** 2))
    if not np.any(h):
        return None
    if n_end <= floor:
        return np.inf
    return float(np.log(n_mid / n_end) / (taus[-1] - taus[j]))


@dataclass
class LotSequence:
    """Members W_m = v_star + w_m of the leading-order iteration."""

    v_star: np.ndarray
    params: FluidParameters
    ell: int
    d: int
    taus: np.ndarray
    last: np.ndarray
    last_rhs: np.ndarray
    members: Optional[List[np.ndarray]] = None
    diff_norms: Optional[np.ndarray] = None
    tail_rates: List[float] = field(default_factory=list)
    norm_k: int = 2
    backend: str = "spectral"
    _splines: Dict[str, CubicSpline] = field(default_factory=dict, repr=False)

    @property
    def times(self) -> np.ndarray:
        return -np.exp(-self.taus)

    def _spline(self, name: str) -> CubicSpline:
        if name not in self._splines:
            data = self.last if name == "w" else self.last_rhs
            self._splines[name] = CubicSpline(self.taus, data, axis=0)
        return self._splines[name]

    def _w(self, tau: float, name: str) -> np.ndarray:
        if tau > self.taus[-1]:
            # beyond the stored grid the member has converged to the seed to round-off
            return np.zeros_like(self.v_star)
        if tau < self.taus[0] - 1e-12:
            raise ValueError(f"tau={tau} precedes the stored grid starting at {self.taus[0]}")
        return self._spline(name)(tau)

    def W(self, t: float) -> np.ndarray:
        """Last member W_{ell-1} at time t."""
        return self.v_star + self._w(-np.log(-t), "w")

    def member(self, m: int, j: int) -> np.ndarray:
        """Member W_m at grid node j (requires keep_all)."""
        if self.members is None:
            raise ValueError("members were not stored; build with keep_all=True")
        return self.v_star + self.members[m][j]

    def record(self, t: float) -> LotRecord:
        """U_star = T-hat^{-1} W_{ell-1} with its t-derivative and gradients."""
        tau = -np.log(-t)
        W = self.v_star + self._w(tau, "w")
        dW = self._w(tau, "h") / (-t) if self.ell > 1 else np.zeros_like(W)
        Thi = rescaling_Th_inv(t, self.params.G)
        G = self.params.G
        s = -t
        # d/dt of diag(1, s^G1, s^G2, s^G3)
        dThi = np.array([0.0, -G[0] * s ** (G[0] - 1.0), -G[1] * s ** (G[1] - 1.0), -G[2] * s ** (G[2] - 1.0)])
        U = Thi * W
        U_t = dThi * W + Thi * dW
        grads = [Thi * g for g in gradient(W, self.d, self.backend)] if self.d else []
        return LotRecord(U=U, U_t=U_t, U_grad=grads)


def _lot_h(params, t, W, d, backend):
    grads = gradient(W, d, backend) if d else []
    return (-t) * lot_rhs(t, W, grads, params)


def build_lot(v_star: np.ndarray, ell: int, params: FluidParameters, T0: float, d: int = 1,
              dtau: float = 0.05, tau_max: float = 23.0, margin: float = 0.5, norm_k: int = 2,
              keep_all: bool = False, backend: str = "spectral", tail_span: float = 5.0) -> LotSequence:
    """Iterate the leading-order construction up to member ell-1.

    The tau grid runs from -ln|T0| - margin to tau_max. The integral from the
    last node to infinity is closed with an exponential tail h_end / a whose
    rate a is fitted from the final ``tail_span`` of the grid.

    The integrand carries an absolute round-off floor of order 1e-16 (the
    singular term of Gh is a near cancellation), so tau_max should stay where
    the members are still resolved; the default corresponds to |t| = 1e-10.
    """
    v_star = np.asarray(v_star, dtype=float)
    if ell < 1:
        raise ValueError("ell must be at least 1")
    if np.any(v_star[..., 0] <= 0):
        raise ValueError("v_star^0 must be positive")
    tau0 = -np.log(-T0) - margin
    n = int(np.ceil((tau_max - tau0) / dtau)) + 1
    taus = tau0 + dtau * np.arange(n)
    times = -np.exp(-taus)
    zeros = np.zeros((n,) + v_star.shape)
    w = zeros
    h = zeros
    members = [w] if keep_all else None
    diffs = []
    rates = []
    for m in range(1, ell):
        h = np.stack([_lot_h(params, times[j], v_star + w[j], d, backend) for j in range(n)])
        floor = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(v_star))))
        rate = _tail_rate(taus, h, tail_span, floor)
        if rate is None:
            w_new = np.zeros_like(w)
            rates.append(np.nan)
        else:
            if not rate > 0:
                raise LotConfigurationError(
                    f"member {m}: integrand decay rate {rate:.3g} <= 0, not integrable at t = 0")
            tail = h[-1] / rate if np.isfinite(rate) else np.zeros_like(h[-1])
            anti = CubicSpline(taus, h, axis=0).antiderivative()
            cum = anti(taus[-1]) - anti(taus)
            w_new = -(cum + tail)
            rates.append(rate)
        diffs.append([sobolev_norm(w_new[j] - w[j], norm_k, d) for j in range(n)])
        w = w_new
        if keep_all:
            members.append(w)
    return LotSequence(v_star=v_star, params=params, ell=ell, d=d, taus=taus, last=w,
                       last_rhs=h if ell > 1 else zeros, members=members,
                       diff_norms=np.asarray(diffs) if diffs else None, tail_rates=rates,
                       norm_k=norm_k, backend=backend)


def _fit_window(s: np.ndarray, vals: np.ndarray, noise: float) -> Tuple[float, float]:
    """Last decade of |t| on which the series stays above ``noise`` times its maximum."""
    ok = vals > noise * np.max(vals)
    # first index (moving toward t = 0) where the series hits the noise floor
    bad = np.nonzero(~ok)[0]
    j = bad[0] - 1 if len(bad) else len(s) - 1
    lo = s[j]
    # smallest grid time at least one decade above lo
    above = s[s >= 10.0 * lo * (1.0 - 1e-12)]
    hi = float(above.min()) if len(above) else float(s[0])
    if hi / lo < 10.0 * (1.0 - 1e-9):
        raise ValueError("insufficient decades of t above the noise floor")
    return lo, hi


def lot_residual_rates(seq: LotSequence, t_window: Optional[Sequence[float]] = None,
                       noise: float = 1e-8, floor: float = 1e-12) -> List[dict]:
    """Fitted exponents of ||W_m - W_{m-1}|| against |t| for m = 1..ell-1.

    By default each fit uses the last decade of the grid on which the
    difference is resolved, i.e. above ``noise`` relative to its maximum;
    beyond that the H^k norm measures round-off. Differences that never
    exceed ``floor`` relative to the data are skipped.
    """
    from .cli_runner import fit_power_law

    if seq.ell < 2 or seq.diff_norms is None:
        raise ValueError("need ell >= 2")
    out = []
    s = np.exp(-seq.taus)
    ref = max(sobolev_norm(seq.v_star, seq.norm_k, seq.d), 1e-300)
    for m in range(1, seq.ell):
        vals = seq.diff_norms[m - 1]
        pred = predicted_difference_exponent(seq.params.G, m)
        if np.max(vals) <= floor * ref:
            out.append({"m": m, "slope": None, "predicted": pred, "skipped": True})
            continue
        lo, hi = t_window if t_window is not None else _fit_window(s, vals, noise)
        sel = (s >= lo) & (s <= hi)
        slope, icpt, resid = fit_power_law(s[sel], vals[sel])
        out.append({"m": m, "slope": slope, "predicted": pred, "skipped": False, "residual": resid,
                    "window": [float(lo), float(hi)]})
    return out
