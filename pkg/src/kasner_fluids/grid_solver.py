"""Periodic grids, discrete Sobolev norms and log-time evolution.

Fields are arrays of shape (N,)*d + (rank,) on [0, 2 pi)^d. Evolution uses the
log time tau = -ln(-t), in which a Fuchsian system reads

    du/dtau = -B0^{-1} [Bc u + t F - t B^i d_i u].
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .fuchsian_core import FuchsianSystem, divergence_map

__all__ = [
    "FieldState",
    "grid_coordinates",
    "spectral_derivative",
    "fd4_derivative",
    "gradient",
    "sobolev_norm",
    "sup_norm",
    "EvolveControls",
    "Trajectory",
    "evolve",
    "energy_identity_residual",
    "tau_of",
    "t_of",
]


def tau_of(t):
    return -np.log(-np.asarray(t, dtype=float)) if np.ndim(t) else -np.log(-float(t))


def t_of(tau):
    return -np.exp(-np.asarray(tau, dtype=float)) if np.ndim(tau) else -np.exp(-float(tau))


@dataclass
class FieldState:
    """Field values on a periodic grid at time t < 0."""

    values: np.ndarray
    t: float
    d: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.t >= 0:
            raise ValueError("t must be negative")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @property
    def tau(self) -> float:
        return -np.log(-self.t)

    @property
    def N(self) -> int:
        return self.values.shape[0] if self.d else 1

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.N


def grid_coordinates(N: int, d: int = 1):
    """Coordinate arrays (x, y, z)[:d] with 'ij' indexing."""
    x = 2.0 * np.pi * np.arange(N) / N
    return np.meshgrid(*([x] * d), indexing="ij") if d > 1 else [x]


def _wavenumbers(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, 1.0 / N)


def spectral_derivative(f: np.ndarray, axis: int = 0, dealias: bool = False) -> np.ndarray:
    """Fourier derivative of a real periodic field along ``axis``."""
    f = np.asarray(f, dtype=float)
    N = f.shape[axis]
    fh = np.fft.rfft(f, axis=axis)
    k = np.fft.rfftfreq(N, 1.0 / N)
    mult = 1j * k
    if N % 2 == 0:
        mult[-1] = 0.0
    if dealias:
        mult[k > N / 3.0] = 0.0
    shape = [1] * f.ndim
    shape[axis] = len(k)
    return np.fft.irfft(fh * mult.reshape(shape), n=N, axis=axis)


def fd4_derivative(f: np.ndarray, axis: int = 0) -> np.ndarray:
    """Fourth order central difference on the periodic grid."""
    f = np.asarray(f, dtype=float)
    N = f.shape[axis]
    dx = 2.0 * np.pi / N
    r = lambda s: np.roll(f, -s, axis=axis)
    return (-r(2) + 8.0 * r(1) - 8.0 * r(-1) + r(-2)) / (12.0 * dx)


def gradient(f: np.ndarray, d: int, backend: str = "spectral") -> List[np.ndarray]:
    if backend == "spectral":
        return [spectral_derivative(f, axis=i) for i in range(d)]
    if backend == "fd4":
        return [fd4_derivative(f, axis=i) for i in range(d)]
    raise ValueError(f"unknown backend {backend!r}")


def _sobolev_weights(N: int, d: int, k: int) -> np.ndarray:
    ks = [np.abs(_wavenumbers(N))] * d
    grids = np.meshgrid(*ks, indexing="ij")
    w = np.zeros([N] * d)
    for alpha in itertools.product(range(k + 1), repeat=d):
        if sum(alpha) > k:
            continue
        term = np.ones([N] * d)
        for g, a in zip(grids, alpha):
            term = term * g ** (2 * a)
        w = w + term
    return w


def sobolev_norm(f: np.ndarray, k: int = 0, d: Optional[int] = None) -> float:
    """Discrete H^k norm on [0, 2 pi)^d by Parseval.

    The first d axes are spatial; remaining axes are summed as components.
    By default d is the number of axes of f when f is scalar valued.
    """
    f = np.asarray(f, dtype=float)
    if d is None:
        d = f.ndim
    if d == 0:
        return float(np.sqrt(np.sum(f * f)))
    N = f.shape[0]
    fh = np.fft.fftn(f, axes=tuple(range(d)))
    w = _sobolev_weights(N, d, k)
    w = w.reshape(w.shape + (1,) * (f.ndim - d))
    total = np.sum(w * np.abs(fh) ** 2)
    return float(np.sqrt(total * (2.0 * np.pi) ** d / N ** (2 * d)))


def sup_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f)))


@dataclass
class EvolveControls:
    atol: float = 1e-9
    rtol: float = 0.0
    dtau_init: float = 1e-2
    dtau_max: float = 0.5
    dtau_min: float = 1e-9
    fixed_step: Optional[float] = None
    backend: str = "spectral"
    max_steps: int = 200000
    error_weight: Optional[Callable[[float], np.ndarray]] = None
    safety: float = 0.9


@dataclass
class Trajectory:
    """Stored states of an evolution."""

    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    truncated: bool = False
    diagnostic: str = ""
    steps: int = 0
    rejected: int = 0
    last_t: float = np.nan
    last_state: Optional[np.ndarray] = None

    @property
    def taus(self) -> np.ndarray:
        return -np.log(-np.asarray(self.times))

    def as_array(self) -> np.ndarray:
        return np.stack(self.states)


def _rhs(sys: FuchsianSystem, tau: float, u: np.ndarray, backend: str) -> np.ndarray:
    t = -np.exp(-tau)
    grads = gradient(u, sys.d, backend) if sys.d else []
    return sys.tau_rhs(t, u, grads)


def _rk4(sys, tau, u, h, backend):
    k1 = _rhs(sys, tau, u, backend)
    k2 = _rhs(sys, tau + 0.5 * h, u + 0.5 * h * k1, backend)
    k3 = _rhs(sys, tau + 0.5 * h, u + 0.5 * h * k2, backend)
    k4 = _rhs(sys, tau + h, u + h * k3, backend)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check(sys, tau, u):
    if not np.all(np.isfinite(u)):
        return False, "non-finite values"
    if sys.monitor is not None:
        return sys.monitor(-np.exp(-tau), u)
    return True, ""


def evolve(sys: FuchsianSystem, state: FieldState, tau_targets: Sequence[float],
           controls: Optional[EvolveControls] = None) -> Trajectory:
    """Integrate in log time through the requested output times.

    The targets must be monotone and lie on one side of ``state.tau``. Steps
    land exactly on each target. A monitor failure or non-finite values
    truncate the trajectory and record a diagnostic.
    """
    c = controls or EvolveControls()
    targets = [float(x) for x in np.atleast_1d(tau_targets)]
    traj = Trajectory()
    tau = state.tau
    u = np.array(state.values, dtype=float)
    if not targets:
        return traj
    direction = 1.0 if targets[-1] >= tau else -1.0
    if any(direction * (b - a) < 0 for a, b in zip([tau] + targets[:-1], targets)):
        raise ValueError("output times must be monotone in the direction of integration")
    ok, msg = _check(sys, tau, u)
    if not ok:
        traj.truncated, traj.diagnostic = True, f"initial state rejected: {msg}"
        traj.last_t, traj.last_state = -np.exp(-tau), u
        return traj
    h = c.fixed_step if c.fixed_step else c.dtau_init
    for target in targets:
        while direction * (target - tau) > 1e-13 * max(1.0, abs(target)):
            if traj.steps + traj.rejected >= c.max_steps:
                traj.truncated, traj.diagnostic = True, "maximum number of steps reached"
                break
            step = min(h, abs(target - tau))
            hs = direction * step
            if c.fixed_step:
                new = _rk4(sys, tau, u, hs, c.backend)
            else:
                big = _rk4(sys, tau, u, hs, c.backend)
                half = _rk4(sys, tau, u, 0.5 * hs, c.backend)
                new = _rk4(sys, tau + 0.5 * hs, half, 0.5 * hs, c.backend)
                diff = (new - big) / 15.0
                if c.error_weight is not None:
                    diff = diff * c.error_weight(-np.exp(-(tau + hs)))
                scale = c.atol + c.rtol * np.abs(new)
                err = float(np.max(np.abs(diff) / scale)) if np.all(np.isfinite(diff)) else np.inf
                if err > 1.0:
                    traj.rejected += 1
                    h = max(step * max(0.2, c.safety * err ** -0.2), c.dtau_min)
                    if step <= c.dtau_min:
                        traj.truncated, traj.diagnostic = True, "step size underflow"
                        break
                    continue
                grow = 5.0 if err == 0 else min(5.0, c.safety * err ** -0.2)
                if step == h or grow < 1.0:
                    h = min(c.dtau_max, step * grow)
            tau = tau + hs
            u = new
            traj.steps += 1
            ok, msg = _check(sys, tau, u)
            if not ok:
                traj.truncated, traj.diagnostic = True, f"tau={tau:.6g}: {msg}"
                break
        if traj.truncated:
            break
        tau = target
        traj.times.append(-np.exp(-tau))
        traj.states.append(u.copy())
    traj.last_t, traj.last_state = -np.exp(-tau), u
    return traj


def _inner(a: np.ndarray, b: np.ndarray, d: int) -> float:
    w = (2.0 * np.pi / a.shape[0]) ** d if d else 1.0
    return float(np.sum(a * b) * w)


def energy_identity_residual(sys: FuchsianSystem, traj: Trajectory, k: int = 0,
                             backend: str = "spectral") -> np.ndarray:
    """Residual of d/dt <u, B0 u> = (2/t)<u, Bc u> + <u, DivB u> + 2 <u, F>.

    Time derivatives are three-point differences of the stored states, so the
    residual is second order in the output spacing. Returns one value per
    interior stored state.
    """
    if len(traj.states) < 3:
        raise ValueError("need at least three stored states")
    if k != 0:
        raise NotImplementedError("only the L2 identity is implemented")
    ts = np.asarray(traj.times)
    us = traj.states
    d = sys.d
    energy = []
    for t, u in zip(ts, us):
        B0 = sys.coefficients(t, u)[0]
        energy.append(_inner(u, np.einsum("...ij,...j->...i", B0, u), d))
    energy = np.asarray(energy)
    out = []
    for n in range(1, len(ts) - 1):
        h1, h2 = ts[n] - ts[n - 1], ts[n + 1] - ts[n]
        wts = (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
        dE = wts[0] * energy[n - 1] + wts[1] * energy[n] + wts[2] * energy[n + 1]
        u_t = wts[0] * us[n - 1] + wts[1] * us[n] + wts[2] * us[n + 1]
        t, u = ts[n], us[n]
        grads = gradient(u, d, backend) if d else []
        B0, Bs, Bc, F = sys.coefficients(t, u)
        div = divergence_map(sys, t, u, u_t, grads)
        rhs = (2.0 / t) * _inner(u, np.einsum("...ij,...j->...i", Bc, u), d)
        rhs += _inner(u, np.einsum("...ij,...j->...i", div, u), d)
        rhs += 2.0 * _inner(u, F, d)
        out.append(dE - rhs)
    return np.asarray(out)
