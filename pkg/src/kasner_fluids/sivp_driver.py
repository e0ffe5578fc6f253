"""Singular initial value problem for the Euler system.

The solution is U = U_star + u where U_star = T-hat^{-1} W_{ell-1} is the
leading-order term and u is the limit of regular Cauchy problems with zero
data at times t_n -> 0, each evolved backward to T0 with the remainder system

    B0(U) u_t + B^i(U) d_i u = (1/t) Bc(U) u + F,
    F = (1/t) Bc(U) U_star + G(U) - B0(U) d_t U_star - B^i(U) d_i U_star.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .euler_coefficients import assemble_full, in_window, observables, pushforward_tilde, remainder_source
from .fluid_params import FluidDomainError, FluidParameters, remainder_rates, rescaling_T, rescaling_Th
from .fuchsian_core import ConditionReport, FuchsianSystem, check_forward_conditions
from .grid_solver import EvolveControls, FieldState, Trajectory, evolve, sobolev_norm
from .kasner_geometry import coordinate_transform
from .lot_builder import LotSequence, build_lot

__all__ = [
    "ConvergenceError",
    "euler_system",
    "remainder_system",
    "SivpConfig",
    "SivpRun",
    "solve_sivp",
    "decay_fit",
    "pressure_fit",
    "uniqueness_probe",
    "resample",
]

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


class ConvergenceError(RuntimeError):
    """The zero-data trajectories did not form a Cauchy sequence."""


def _apply(M, u):
    return np.einsum("...ij,...j->...i", M, u)


def _window_monitor(width: float):
    def check(U, r):
        if not np.all(in_window(U, width)):
            return False, f"left the hyperbolicity window |PU| <= {width} U^0"
        if not np.all(r > 0):
            return False, "fluid vector no longer timelike"
        return True, ""

    return check


def euler_system(params: FluidParameters, d: int = 1, window: float = 0.3) -> FuchsianSystem:
    """The full rescaled Euler system for U with a window and timelike monitor."""
    check = _window_monitor(window)

    def coeffs(t, U):
        cs = assemble_full(t, U, params)
        return cs.B0, cs.B[:d], cs.Bc, cs.G

    def monitor(t, U):
        return check(U, assemble_full(t, U, params).r)

    return FuchsianSystem(coeffs, rank=4, d=d, gamma1=np.nan, monitor=monitor, name="euler")


def remainder_system(lot: LotSequence, lam: float, mu: float, p: float, window: float = 0.3) -> FuchsianSystem:
    """Fuchsian system for the remainder u around the leading-order term."""
    params = lot.params
    d = lot.d
    cache: Dict[float, object] = {}
    check = _window_monitor(window)

    def record(t):
        rec = cache.get(t)
        if rec is None:
            if len(cache) > 8:
                cache.clear()
            rec = cache[t] = lot.record(t)
        return rec

    def coeffs(t, u):
        rec = record(t)
        U = rec.U + u
        cs = assemble_full(t, U, params)
        F = _apply(cs.Bc, rec.U) / t + cs.G - _apply(cs.B0, rec.U_t)
        for Bi, dU in zip(cs.B[:d], rec.U_grad):
            F = F - _apply(Bi, dU)
        return cs.B0, cs.B[:d], cs.Bc, F

    def split(t, u):
        return remainder_source(t, record(t), u, params, lam)

    def monitor(t, u):
        U = record(t).U + u
        return check(U, assemble_full(t, U, params).r)

    return FuchsianSystem(coeffs, rank=4, d=d, p=p, mu=mu, lam=lam, q=params.q, split=split,
                          monitor=monitor, name="euler-remainder")


@dataclass
class SivpConfig:
    """Numerical choices of the singular initial value solver."""

    T0: float = -0.5
    ell: Optional[int] = None
    mu: Optional[float] = None
    n_start: int = 3
    n_max: int = 22
    n_min: int = 8
    tol: float = 1e-6
    k: int = 2
    window: float = 0.3
    check_conditions: bool = True
    workers: int = 1
    lot_dtau: float = 0.05
    lot_tau_max: float = 23.0
    t_end: Optional[float] = None
    # fixed steps dividing the output spacing ln2/4, so that successive zero-data
    # runs share one discrete evolution map on their common window
    controls: EvolveControls = field(default_factory=lambda: EvolveControls(fixed_step=LN2 / 32.0))


@dataclass
class SivpRun:
    """Result of :func:`solve_sivp`; states are U = U_star + u on the output grid."""

    v_star: np.ndarray
    params: FluidParameters
    config: SivpConfig
    lot: LotSequence
    lam: float
    mu: float
    p: float
    times: np.ndarray
    remainders: np.ndarray
    U: np.ndarray
    differences: List[float]
    n_used: int
    converged: bool
    trivial: bool = False
    conditions: Optional[ConditionReport] = None
    diagnostic: str = ""
    scale: float = 1.0

    @property
    def d(self) -> int:
        return self.lot.d

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def V(self) -> np.ndarray:
        """Coordinate components V = T U on the output grid."""
        return np.stack([rescaling_T(t, self.params.G) * U for t, U in zip(self.times, self.U)])

    def W(self) -> np.ndarray:
        """Rescaled components W = T-hat U on the output grid."""
        return np.stack([rescaling_Th(t, self.params.G) * U for t, U in zip(self.times, self.U)])

    def shrink_factors(self) -> np.ndarray:
        dif = np.asarray(self.differences)
        return dif[1:] / dif[:-1] if len(dif) > 1 else np.array([])

    def solution_at(self, t: float) -> np.ndarray:
        """U at an output time (exact match required)."""
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-12 * abs(t):
            raise ValueError(f"t={t} is not an output time")
        return self.U[j]


def _output_taus(T0: float, n: int) -> np.ndarray:
    tau0 = -np.log(-T0)
    return tau0 + (LN2 / 4.0) * np.arange(4 * n + 1)


def _sample_cloud(lot: LotSequence, T0: float, n: int, stride: int = 4):
    cloud = []
    for t in -(-T0) * 2.0 ** -np.linspace(0, n, 6):
        U = lot.record(t).U
        flat = U.reshape(-1, 4)
        for v in flat[::stride]:
            cloud.append((float(t), v))
    return cloud


def _resolved_source_norm(sys: FuchsianSystem, lot: LotSequence, cfg: SivpConfig):
    """||F_tilde(s)||_{H^k} on the range where it is resolved, extrapolated below.

    The residual of the leading-order term carries 1/t terms whose round-off
    grows like 1/|t|, so ||F_tilde|| eventually rises. The resolved range ends
    where |s|^p ||F_tilde|| is smallest on a log grid; below that cut a power
    law fitted over the decade above the cut is used.
    """
    d = lot.d
    zero = np.zeros_like(lot.v_star)

    def raw(s):
        F_tilde, _ = sys.split(s, zero)
        return sobolev_norm(F_tilde, cfg.k, d) if d else float(np.linalg.norm(F_tilde))

    taus = np.arange(-np.log(-cfg.T0), lot.taus[-1], 0.25)
    vals = np.array([raw(-np.exp(-tau)) for tau in taus])
    weighted = np.exp(-sys.p * taus) * vals
    # first local minimum of the weighted norm marks the onset of the noise floor
    rising = np.nonzero(np.diff(weighted) >= 0)[0]
    j = int(rising[0]) if len(rising) else len(taus) - 1
    s_cut = np.exp(-taus[j])
    i = max(0, j - 9)
    if j - i >= 2 and np.all(vals[i:j + 1] > 0):
        rate = float(np.polyfit(-taus[i:j + 1], np.log(vals[i:j + 1]), 1)[0])
    else:
        rate = 0.0

    def norm(s):
        if -s >= s_cut:
            return raw(s)
        return vals[j] * (-s / s_cut) ** rate

    return norm, s_cut, rate


def _conditions(sys: FuchsianSystem, lot: LotSequence, cfg: SivpConfig, n: int) -> ConditionReport:
    from .fuchsian_core import HypothesisResult

    d = lot.d
    wrapped = FuchsianSystem(lambda t, v: _pointwise(sys, lot, t, v), rank=4, d=d, p=sys.p, mu=sys.mu,
                             lam=sys.lam)
    cloud = _sample_cloud(lot, cfg.T0, n)
    try:
        Ft_norm, s_cut, rate = _resolved_source_norm(sys, lot, cfg)
        rep = check_forward_conditions(wrapped, cloud, cfg.T0, Ft_norm=Ft_norm, quad_rtol=1e-6,
                                       quad_atol=1e-9)
        rep["smallness"].detail += f"; resolved down to |t|={s_cut:.2e}, extrapolated with rate {rate:.3g}"
        return rep
    except Exception as exc:  # quadrature failure is reported, not fatal
        rep = check_forward_conditions(wrapped, cloud, cfg.T0)
        rep.results.append(HypothesisResult("smallness", float("nan"), False, None, str(exc)))
        return rep


def _pointwise(sys, lot, t, v):
    # B0 and Bc depend only on U; evaluate at the fiber point U = v directly
    cs = assemble_full(t, v, lot.params)
    return cs.B0, cs.B[: lot.d], cs.Bc, cs.G


def _zero_data_run(sys, shape, tau_n, taus_back, controls):
    t_n = -np.exp(-tau_n)
    state = FieldState(np.zeros(shape), t_n, d=len(shape) - 1)
    return evolve(sys, state, taus_back, controls)


def solve_sivp(v_star, params: FluidParameters, config: Optional[SivpConfig] = None, d: int = 1) -> SivpRun:
    """Solve the singular initial value problem with asymptotic data ``v_star``."""
    cfg = config or SivpConfig()
    if not params.stable:
        log.warning("fluid regime is %s; convergence is not expected", params.regime)
    ell = cfg.ell if cfg.ell is not None else params.ell
    if ell != params.ell:
        params = params.with_ell(ell)
    v_star = np.asarray(v_star, dtype=float)
    if v_star.shape[-1] != 4 or v_star.ndim != d + 1:
        raise ValueError(f"v_star must have shape (N,)*{d} + (4,)")
    try:
        lam, mu, p = remainder_rates(params.G, ell, cfg.mu)
    except FluidDomainError:
        lam, mu, p = np.nan, np.nan, np.nan
        if params.stable:
            raise
    lot = build_lot(v_star, ell, params, cfg.T0, d=d, dtau=cfg.lot_dtau, tau_max=cfg.lot_tau_max, norm_k=cfg.k)
    sys = remainder_system(lot, lam, mu, p, cfg.window)
    n_grid = cfg.n_max
    taus = _output_taus(cfg.T0, n_grid)
    times = -np.exp(-taus)
    scale = max(sobolev_norm(lot.record(cfg.T0).U, cfg.k, d), 1e-300)
    conditions = None
    if cfg.check_conditions and params.stable:
        conditions = _conditions(sys, lot, cfg, cfg.n_start)
        if not conditions.passed:
            log.warning("forward hypotheses not all satisfied at T0=%g", cfg.T0)

    runs: Dict[int, Trajectory] = {}
    diffs: List[float] = []
    converged = False
    diagnostic = ""
    n_used = cfg.n_start

    def launch(n):
        j_n = 4 * n
        back = taus[:j_n][::-1]
        return _zero_data_run(sys, v_star.shape, taus[j_n], back, cfg.controls)

    n_min = cfg.n_min
    if cfg.t_end is not None:
        # the converged run must reach t_end; it covers [T0, 2^{1/4} t_n]
        n_min = max(n_min, int(np.ceil(np.log2(cfg.T0 / cfg.t_end) + 0.25)))
    if n_min > cfg.n_max:
        raise ValueError(f"n_max={cfg.n_max} cannot reach t_end={cfg.t_end}")

    # for trivial data the LOT is the seed and the remainder source vanishes, both up to round-off
    F_probe = sys.coefficients(times[0], np.zeros_like(v_star))[3]
    tiny = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(v_star))))
    if np.max(np.abs(F_probe)) <= tiny and np.max(np.abs(lot.last)) <= tiny:
        n = max(cfg.n_start, n_min if cfg.t_end is not None else cfg.n_start)
        U = np.stack([lot.record(t).U for t in times[: 4 * n + 1]])
        return SivpRun(v_star, params, cfg, lot, lam, mu, p, times[: 4 * n + 1], np.zeros_like(U), U, [0.0],
                       n, True, trivial=True, conditions=conditions, scale=scale)
    n = cfg.n_start
    batch = max(1, int(cfg.workers))
    pool = ThreadPoolExecutor(max_workers=batch) if batch > 1 else None
    try:
        while n <= cfg.n_max and not converged:
            ns = list(range(n, min(n + batch, cfg.n_max + 1)))
            results = list(pool.map(launch, ns)) if pool else [launch(m) for m in ns]
            for m, traj in zip(ns, results):
                runs[m] = traj
                if traj.truncated:
                    diagnostic = f"run from t_{m}: {traj.diagnostic}"
                    break
                if m - 1 in runs:
                    prev = runs[m - 1]
                    # states are stored from tau_m - step down to tau0; align on the common window
                    a = np.stack(traj.states[::-1])
                    b = np.stack(prev.states[::-1])
                    common = min(len(a), len(b))
                    dif = max(sobolev_norm(a[j] - b[j], cfg.k, d) for j in range(common))
                    diffs.append(dif)
                    n_used = m
                    if m >= n_min and dif < cfg.tol * scale:
                        converged = True
                        break
            if diagnostic:
                break
            n = ns[-1] + 1
    finally:
        if pool:
            pool.shutdown()
    if not converged and not diagnostic:
        diagnostic = f"no convergence after n_max={cfg.n_max} (last difference {diffs[-1] if diffs else np.nan:.3e})"
    final = runs[n_used] if n_used in runs else None
    if final is None or final.truncated or not final.states:
        return SivpRun(v_star, params, cfg, lot, lam, mu, p, np.array([]), np.zeros((0,) + v_star.shape),
                       np.zeros((0,) + v_star.shape), diffs, n_used, False, conditions=conditions,
                       diagnostic=diagnostic, scale=scale)
    rem = np.stack(final.states[::-1])
    ts = times[: len(rem)]
    U = np.stack([lot.record(t).U for t in ts]) + rem
    return SivpRun(v_star, params, cfg, lot, lam, mu, p, ts, rem, U, diffs, n_used, converged,
                   conditions=conditions, diagnostic=diagnostic, scale=scale)


def decay_fit(run: SivpRun, t_window: Optional[Sequence[float]] = None, floor: float = 1e-12) -> List[dict]:
    """Fit ||W^a - v_star^a||_{H^k} ~ |t|^eps for each component.

    Components whose residual stays below ``floor`` relative to the data are
    skipped.
    """
    from .cli_runner import fit_power_law

    if run.trivial:
        return [{"component": a, "slope": None, "skipped": True, "eps": run.params.eps} for a in range(4)]
    if not run.converged:
        raise ValueError(f"cannot fit an unconverged run: {run.diagnostic}")
    s = -run.times
    lo, hi = (s.min(), s.max()) if t_window is None else t_window
    sel = (s >= lo) & (s <= hi)
    if np.log10(hi / lo) < 2.0 - 1e-9 or sel.sum() < 8:
        raise ValueError("fit range must span at least two decades of |t| with 8 samples")
    W = run.W()
    d = run.d
    ref = max(sobolev_norm(run.v_star, run.config.k, d), 1e-300)
    out = []
    for a in range(4):
        vals = np.array([sobolev_norm(W[j][..., a] - run.v_star[..., a], run.config.k, d) for j in range(len(s))])
        if np.max(vals[sel]) <= floor * ref:
            out.append({"component": a, "slope": None, "skipped": True, "eps": run.params.eps})
            continue
        slope, icpt, resid = fit_power_law(s[sel], vals[sel])
        out.append({"component": a, "slope": slope, "intercept": icpt, "residual": resid, "skipped": False,
                    "eps": run.params.eps})
    return out


def pressure_fit(run: SivpRun) -> dict:
    """Slope of log P against log t-tilde at every grid point; reports the extremes."""
    from .cli_runner import fit_power_law

    if not run.converged:
        raise ValueError(f"cannot fit an unconverged run: {run.diagnostic}")
    params = run.params
    tt = coordinate_transform(run.times, "to_tilde", params.bg.K, params.bg.A)
    V = run.V()
    flat = V.reshape(len(run.times), -1, 4)
    slopes = []
    timelike = True
    for x in range(flat.shape[1]):
        P = []
        for j, t in enumerate(run.times):
            Vt = pushforward_tilde(t, flat[j, x], params)
            Pj, _, _, tl = observables(tt[j], Vt, params)
            timelike = timelike and tl
            P.append(Pj)
        slopes.append(fit_power_law(tt, np.asarray(P))[0])
    slopes = np.asarray(slopes)
    expected = -(1.0 + params.cs2)
    worst = float(slopes[np.argmax(np.abs(slopes - expected))])
    return {"expected": expected, "min": float(slopes.min()), "max": float(slopes.max()), "worst": worst,
            "relative_error": abs(worst - expected) / abs(expected), "timelike": bool(timelike)}


def resample(f: np.ndarray, N: int, d: int) -> np.ndarray:
    """Fourier resampling of a periodic field onto N points per axis."""
    f = np.asarray(f, dtype=float)
    M = f.shape[0]
    if M == N:
        return f
    axes = tuple(range(d))
    fh = np.fft.fftshift(np.fft.fftn(f, axes=axes), axes=axes)
    out_shape = (N,) * d + f.shape[d:]
    gh = np.zeros(out_shape, dtype=complex)
    n = min(M, N)
    src = tuple(slice(M // 2 - n // 2, M // 2 - n // 2 + n) for _ in axes)
    dst = tuple(slice(N // 2 - n // 2, N // 2 - n // 2 + n) for _ in axes)
    gh[dst] = fh[src]
    g = np.fft.ifftn(np.fft.ifftshift(gh, axes=axes), axes=axes).real
    return g * (N / M) ** d


def uniqueness_probe(run_a: SivpRun, run_b: SivpRun, mu_probe: Optional[float] = None) -> dict:
    """Difference of two solutions scaled by |t|^{-mu} T^{-1}, on their common output times."""
    mu = run_a.params.G[0] + 0.02 if mu_probe is None else mu_probe
    d = run_a.d
    N = min(run_a.U.shape[1], run_b.U.shape[1]) if d else 1
    tb = {round(float(t), 14): j for j, t in enumerate(run_b.times)}
    times, scaled, raw = [], [], []
    for i, t in enumerate(run_a.times):
        j = tb.get(round(float(t), 14))
        if j is None:
            continue
        a = resample(run_a.U[i], N, d) if d else run_a.U[i]
        b = resample(run_b.U[j], N, d) if d else run_b.U[j]
        diff = sobolev_norm(a - b, run_a.config.k, d) if d else float(np.linalg.norm(a - b))
        times.append(float(t))
        raw.append(diff)
        scaled.append((-t) ** (-mu) * diff)
    if not times:
        raise ValueError("runs share no output times")
    scaled = np.asarray(scaled)
    return {"mu": mu, "times": times, "difference": raw, "scaled": scaled.tolist(),
            "max_scaled": float(scaled.max()), "bounded": bool(np.all(np.isfinite(scaled)))}
