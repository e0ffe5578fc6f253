"""Closed-form and high accuracy ODE references.

* the model Fuchsian equation u' = (b/t) u + F(t),
* the Q-equation for the ratio of frame components with its first integral,
* spatially homogeneous solutions of the rescaled Euler system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .euler_coefficients import assemble_full, observables, pushforward_tilde
from .fluid_params import FluidParameters, rescaling_T
from .kasner_geometry import coordinate_transform, frame_components
from .quadrature import singular_quadrature

__all__ = [
    "ModelSolution",
    "model_exact",
    "model_exact_negative",
    "negative_to_positive_source",
    "QTrajectory",
    "q_equation",
    "q_invariant",
    "HomogeneousTrajectory",
    "homogeneous_euler",
    "frame_history",
]


@dataclass
class ModelSolution:
    """Data for u' = (b/t) u + F(t), t > 0.

    Either the backward anchor (t_star, u_star) or the asymptotic datum
    u_tilde_star (the limit of t^{-b} u at t = 0) is given.
    """

    b: float
    F: Optional[Callable[[float], float]] = None
    t_star: Optional[float] = None
    u_star: Optional[float] = None
    u_tilde_star: Optional[float] = None

    def source(self, s: float) -> float:
        return 0.0 if self.F is None else float(self.F(s))

    def asymptotic_datum(self, a_min: float = 1e-3) -> float:
        """u_tilde_star = t_star^{-b} u_star + int_0^{t_star} s^{-b} F(s) ds."""
        if self.u_tilde_star is not None:
            return self.u_tilde_star
        if self.F is None:
            return self.t_star ** (-self.b) * self.u_star
        integral = singular_quadrature(lambda s: (-s) ** (-self.b) * self.source(-s), -self.t_star, a_min)
        return self.t_star ** (-self.b) * self.u_star - integral


def model_exact(model: ModelSolution, t: float, a_min: float = 1e-3) -> float:
    """Closed-form solution at t > 0 from either anchor."""
    if t <= 0:
        raise ValueError("the model solution uses t > 0; see model_exact_negative")
    b = model.b
    if model.u_tilde_star is not None:
        if model.F is None:
            return t**b * model.u_tilde_star
        g = lambda s: (-s) ** (-b) * model.source(-s)
        # int_0^t s^{-b} F(s) ds, non-integrable forward data raise from the quadrature
        integral = singular_quadrature(g, -t, a_min)
        return t**b * (model.u_tilde_star + integral)
    if model.t_star is None or model.u_star is None:
        raise ValueError("either (t_star, u_star) or u_tilde_star must be given")
    integral = 0.0
    if model.F is not None:
        integral, _ = integrate.quad(lambda s: s ** (-b) * model.source(s), model.t_star, t,
                                     epsabs=0.0, epsrel=1e-13, limit=200)
    return t**b * (model.t_star ** (-b) * model.u_star + integral)


def negative_to_positive_source(F_neg: Optional[Callable[[float], float]]):
    """Source in the positive time s = -t: F_pos(s) = -F_neg(-s)."""
    if F_neg is None:
        return None
    return lambda s: -float(F_neg(-s))


def model_exact_negative(b: float, F_neg, t_star: float, u_star: float, t: float) -> float:
    """Solution of u' = (b/t) u + F(t) for t < 0 through u(t_star) = u_star."""
    model = ModelSolution(b=b, F=negative_to_positive_source(F_neg), t_star=-t_star, u_star=u_star)
    return model_exact(model, -t)


def q_invariant(Q, tau, cs2: float, sign: int):
    """Q^{-2} + 2 cs2 log Q - (1 - cs2) tau^{2 sign}."""
    Q = np.asarray(Q, dtype=float)
    return Q**-2 + 2.0 * cs2 * np.log(Q) - (1.0 - cs2) * np.asarray(tau, dtype=float) ** (2 * sign)


def _q_rhs(tau, Q, cs2, sign):
    # sign chosen so that q_invariant is a first integral
    return -sign * (1.0 - cs2) * Q**3 / (tau ** (1 - 2 * sign) * (1.0 - cs2 * Q * Q))


@dataclass
class QTrajectory:
    tau: np.ndarray
    Q: np.ndarray
    drift: np.ndarray
    truncated: bool = False
    diagnostic: str = ""

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.drift)))


def q_equation(cs2: float, sign: int, Q0: float, tau_range: Sequence[float], atol: float = 1e-12,
               h0: float = 1e-4, singular_tol: float = 1e-6, max_steps: int = 10**6) -> QTrajectory:
    """Integrate the Q-equation from tau_range[0] to tau_range[1] with adaptive RK4.

    ``sign`` is +1 for the stable side (cs2 > p3) and -1 for the unstable side.
    The drift of :func:`q_invariant` relative to its initial value is returned.
    """
    if Q0 <= 0:
        raise ValueError("Q0 must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    tau0, tau1 = float(tau_range[0]), float(tau_range[1])
    f = lambda tau, Q: _q_rhs(tau, Q, cs2, sign)
    taus, Qs = [tau0], [Q0]
    tau, Q = tau0, float(Q0)
    direction = 1.0 if tau1 > tau0 else -1.0
    h = h0 * abs(tau0 if tau0 else 1.0)
    truncated, diag = False, ""

    def rk4(tau, Q, h):
        k1 = f(tau, Q)
        k2 = f(tau + h / 2, Q + h / 2 * k1)
        k3 = f(tau + h / 2, Q + h / 2 * k2)
        k4 = f(tau + h, Q + h * k3)
        return Q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    steps = 0
    while direction * (tau1 - tau) > 0 and steps < max_steps:
        step = min(h, abs(tau1 - tau))
        hs = direction * step
        big = rk4(tau, Q, hs)
        half = rk4(tau + hs / 2, rk4(tau, Q, hs / 2), hs / 2)
        err = abs(half - big) / 15.0 / (atol + atol * abs(half))
        if not np.isfinite(err) or err > 1.0:
            h = step * 0.25 if not np.isfinite(err) else step * max(0.2, 0.9 * err**-0.2)
            if h < 1e-14 * max(abs(tau), 1e-300):
                truncated, diag = True, "step size underflow"
                break
            continue
        tau, Q = tau + hs, half + (half - big) / 15.0
        steps += 1
        if Q <= 0 or abs(1.0 - cs2 * Q * Q) < singular_tol:
            truncated, diag = True, f"singular factor 1 - cs2 Q^2 reached at tau={tau:.6g}"
            taus.append(tau)
            Qs.append(Q)
            break
        taus.append(tau)
        Qs.append(Q)
        h = step * min(4.0, 0.9 * err**-0.2) if err > 0 else 4.0 * step
    taus = np.asarray(taus)
    Qs = np.asarray(Qs)
    inv = q_invariant(Qs, taus, cs2, sign)
    return QTrajectory(taus, Qs, inv - inv[0], truncated, diag)


@dataclass
class HomogeneousTrajectory:
    t: np.ndarray
    U: np.ndarray
    timelike_lost: bool = False
    truncated: bool = False
    diagnostic: str = ""
    t_tilde_lost: Optional[float] = None
    margin: Optional[np.ndarray] = None


def _timelike_margin(t: float, U: np.ndarray, params: FluidParameters) -> float:
    """-V.V / (V^0)^2 in the classical Kasner coordinates; 1 at rest, 0 on the null cone."""
    V = rescaling_T(t, params.G) * U
    tt = coordinate_transform(t, "to_tilde", params.bg.K, params.bg.A)
    Vt = pushforward_tilde(t, V, params)
    _, _, VV, _ = observables(tt, Vt, params)
    return -VV / Vt[0] ** 2


def homogeneous_euler(U0, params: FluidParameters, t_range: Sequence[float], t_eval=None,
                      rtol: float = 1e-12, atol: float = 1e-14, null_tol: float = 1e-3) -> HomogeneousTrajectory:
    """Spatially homogeneous solution of the rescaled Euler system.

    Integrated in tau = -ln(-t) with an explicit 8th order Runge-Kutta
    method. The timelike flag is raised when the normalized margin
    -V.V/(V^0)^2 falls below ``null_tol`` (or becomes negative), or the
    integrator breaks down while the margin is decreasing.
    """
    t0, t1 = float(t_range[0]), float(t_range[1])
    tau0, tau1 = -np.log(-t0), -np.log(-t1)

    def rhs(tau, U):
        t = -np.exp(-tau)
        cs = assemble_full(t, U, params)
        return -np.linalg.solve(cs.B0, cs.Bc @ U + t * cs.G)

    def null_event(tau, U):
        return _timelike_margin(-np.exp(-tau), U, params) - null_tol

    null_event.terminal = True
    null_event.direction = -1
    tau_eval = None if t_eval is None else -np.log(-np.asarray(t_eval, dtype=float))
    sol = integrate.solve_ivp(rhs, (tau0, tau1), np.asarray(U0, dtype=float), method="DOP853",
                              t_eval=tau_eval, rtol=rtol, atol=atol, events=null_event)
    ts = -np.exp(-sol.t)
    Us = sol.y.T
    margin = np.array([_timelike_margin(t, U, params) for t, U in zip(ts, Us)])
    out = HomogeneousTrajectory(ts, Us, margin=margin)
    if sol.status == 1:
        tl = -np.exp(-sol.t_events[0][0])
        out.timelike_lost = True
        out.truncated = True
        out.t_tilde_lost = float(coordinate_transform(tl, "to_tilde", params.bg.K, params.bg.A))
        out.diagnostic = f"timelike margin below {null_tol:g} at t={tl:.6e}"
    elif sol.status < 0:
        out.truncated = True
        out.diagnostic = sol.message
        if len(margin) > 1 and margin[-1] < margin[0]:
            out.timelike_lost = True
    return out


def frame_history(ts, Us, params: FluidParameters) -> np.ndarray:
    """Frame components W^a of the classical Kasner form along a homogeneous run."""
    out = []
    for t, U in zip(ts, Us):
        V = rescaling_T(t, params.G) * U
        tt = coordinate_transform(t, "to_tilde", params.bg.K, params.bg.A)
        out.append(frame_components(tt, pushforward_tilde(t, V, params), params.bg, params.cs2))
    return np.asarray(out)
