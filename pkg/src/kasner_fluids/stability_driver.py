"""Nonlinear stability experiments for fluids near the singularity.

A singular solution is perturbed at T0 and evolved toward t = 0 with the full
rescaled Euler system. The limits W_C(0) of the rescaled components are
extracted and used as asymptotic data for a fresh singular initial value
problem, whose solution should reproduce the perturbed one.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .euler_coefficients import assemble_full
from .fluid_params import FluidParameters, rescaling_T, rescaling_T_inv, rescaling_Th
from .fuchsian_core import ConditionReport, KappaConstants, check_backward_kappa
from .grid_solver import EvolveControls, FieldState, Trajectory, evolve, sobolev_norm
from .sivp_driver import LN2, SivpConfig, SivpRun, euler_system, solve_sivp

__all__ = [
    "StabilityConfig",
    "Extraction",
    "StabilityRun",
    "band_limited_perturbation",
    "run_perturbed",
    "extraction_exponents",
    "extract_asymptotic_data",
    "roundtrip_match",
    "run_stability",
    "predicted_limit_exponents",
    "euler_kappa_constants",
    "euler_kappa_report",
]

log = logging.getLogger(__name__)

PROJ = np.diag([0.0, 1.0, 1.0, 1.0])
PERP = np.diag([1.0, 0.0, 0.0, 0.0])


@dataclass
class StabilityConfig:
    """Choices of the stability experiment."""

    amplitude: float = 0.05
    # -1 perturbs every component, otherwise only the given one
    component: int = -1
    # low modes only: the round trip needs smooth extracted data (ell derivatives are lost)
    band: Optional[int] = 2
    seed: int = 0
    t_extract: float = -1e-6
    sigma_fraction: float = 0.1
    outputs_per_halving: int = 16
    controls: EvolveControls = field(default_factory=lambda: EvolveControls(fixed_step=LN2 / 32.0))
    match_window: float = -1e-3
    window: float = 0.3


def band_limited_perturbation(shape, amplitude: float, component: int = -1, band: Optional[int] = None,
                              seed: int = 0) -> np.ndarray:
    """Random smooth field with Fourier modes |k_i| <= band, scaled to sup norm ``amplitude``.

    Each perturbed component gets its own random coefficients; the default
    band is N/4.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    d = len(shape) - 1
    N = shape[0]
    band = N // 4 if band is None else band
    comps = range(4) if component < 0 else [component]
    out = np.zeros(shape)
    ks = np.fft.fftfreq(N, 1.0 / N)
    mask = np.ones((N,) * d, dtype=bool)
    for ax in range(d):
        sl = [None] * d
        sl[ax] = slice(None)
        mask &= (np.abs(ks) <= band)[tuple(sl)]
    for a in comps:
        coef = (rng.standard_normal((N,) * d) + 1j * rng.standard_normal((N,) * d)) * mask
        f = np.fft.ifftn(coef).real
        m = np.max(np.abs(f))
        if m > 0:
            out[..., a] = amplitude * f / m
    return out


def run_perturbed(base: SivpRun, V0: np.ndarray, T0: Optional[float] = None,
                  config: Optional[StabilityConfig] = None) -> Trajectory:
    """Evolve U_C = T^{-1}(V_S(T0) + V0) from T0 toward the singularity."""
    cfg = config or StabilityConfig()
    T0 = base.times[0] if T0 is None else T0
    params = base.params
    U_S = base.solution_at(T0)
    U_C = U_S + rescaling_T_inv(T0, params.G) * np.asarray(V0, dtype=float)
    sys = euler_system(params, base.d, cfg.window)
    tau0 = -np.log(-T0)
    tau1 = -np.log(-cfg.t_extract)
    dt = LN2 / cfg.outputs_per_halving
    taus = tau0 + dt * np.arange(1, int(np.floor((tau1 - tau0) / dt + 1e-9)) + 1)
    if taus[-1] < tau1 - 1e-12:
        taus = np.append(taus, tau1)
    traj = evolve(sys, FieldState(U_C, T0, d=base.d), taus, cfg.controls)
    traj.times.insert(0, T0)
    traj.states.insert(0, U_C)
    return traj


def predicted_limit_exponents(params: FluidParameters, sigma: float) -> Dict[str, float]:
    """Rates of W^0 and of the spatial components toward their limits."""
    g1, _, g3 = params.G
    return {"W0": min(1.0 - g1 + g3, 2.0 * (g3 - sigma)),
            "W_spatial": min(1.0 - g1, 2.0 * (g3 - sigma) - 2.0 * sigma)}


def extraction_exponents(params: FluidParameters, cap: float = 1.0) -> List[float]:
    """Exponents of the extrapolation model W(t) = W(0) + sum_k c_k |t|^{a_k}.

    Sums of the two generating rates 1 - G1 (gradient coupling) and 2 G3
    (slowest source term), up to ``cap``.
    """
    g1, _, g3 = params.G
    gens = [1.0 - g1, 2.0 * g3]
    out = set()
    for i, j in itertools.product(range(12), repeat=2):
        a = i * gens[0] + j * gens[1]
        if 0 < a <= cap + 1e-12:
            out.add(round(a, 12))
    return sorted(out)


@dataclass
class Extraction:
    """Extracted limits W_C(0) with error bars."""

    W0: np.ndarray
    error: np.ndarray
    fallback: bool
    exponents: List[float]
    fit_residual: float
    rates: Dict[str, Optional[float]]
    rate_window: Sequence[float]


def _fit_limit(s: np.ndarray, Y: np.ndarray, exps: Sequence[float]):
    A = np.column_stack([np.ones_like(s)] + [s**a for a in exps])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    return coef[0], coef, resid


def extract_asymptotic_data(traj: Trajectory, params: FluidParameters, d: int = 1, k: int = 2,
                            sigma: Optional[float] = None, fit_decades: float = 2.0,
                            rate_decades: float = 2.0, residual_tol: float = 1e-4,
                            n_exponents: int = 2) -> Extraction:
    """Extrapolate W_C = T-hat U_C to t = 0.

    A linear least squares fit with the ``n_exponents`` smallest exponents of
    :func:`extraction_exponents` over the last ``fit_decades`` of the
    trajectory gives W_C(0). Larger exponent sets are nearly collinear on a
    few decades and spoil the constant term. The error bar is the change of
    the extrapolated value when the last quarter of the window is dropped. If
    the fit residual is large the last sample is returned with the distance
    to the fit as error bar.
    """
    from .cli_runner import fit_power_law

    if not traj.times:
        raise ValueError("empty trajectory")
    times = np.asarray(traj.times)
    s = -times
    W = np.stack([rescaling_Th(t, params.G) * U for t, U in zip(times, traj.states)])
    sel = s <= s[-1] * 10.0**fit_decades
    exps = extraction_exponents(params)
    # keep the design matrix well posed on the window
    exps = exps[: max(1, min(n_exponents, int(sel.sum()) // 4))]
    shape = W.shape[1:]
    Y = W[sel].reshape(int(sel.sum()), -1)
    W0, coef, resid = _fit_limit(s[sel], Y, exps)
    keep = max(len(exps) + 2, (3 * int(sel.sum())) // 4)
    W0_drop, _, _ = _fit_limit(s[sel][:keep], Y[:keep], exps)
    err = np.abs(W0 - W0_drop)
    scale = max(np.max(np.abs(Y)), 1e-300)
    fit_res = float(np.max(np.abs(resid)) / scale)
    fallback = fit_res > residual_tol
    if fallback:
        log.warning("extrapolation residual %.3e exceeds %.1e; using last sample", fit_res, residual_tol)
        W_last = Y[-1]
        err = np.abs(W_last - W0) + err
        W0 = W_last
    W0 = W0.reshape(shape)
    err = err.reshape(shape)
    # observed rates of ||W^a(t) - W^a(0)|| over the last rate_decades
    rates: Dict[str, Optional[float]] = {}
    rsel = s <= s[-1] * 10.0**rate_decades
    for a in range(4):
        vals = np.array([sobolev_norm(W[j][..., a] - W0[..., a], k, d) for j in np.nonzero(rsel)[0]])
        ref = max(sobolev_norm(W0[..., a], k, d), 1e-300)
        if np.all(vals <= 1e-12 * max(ref, 1.0)):
            rates[f"W{a}"] = None
            continue
        rates[f"W{a}"] = fit_power_law(s[rsel], np.maximum(vals, 1e-300))[0]
    return Extraction(W0=W0, error=err, fallback=fallback, exponents=exps, fit_residual=fit_res, rates=rates,
                      rate_window=[float(s[-1]), float(s[-1] * 10.0**rate_decades)])


@dataclass
class StabilityRun:
    base: SivpRun
    V0: np.ndarray
    perturbed: Optional[Trajectory]
    extraction: Optional[Extraction] = None
    roundtrip: Optional[SivpRun] = None
    match: Optional[dict] = None
    sigma: float = 0.0
    amplitude: float = 0.0
    diagnostic: str = ""

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def params(self) -> FluidParameters:
        return self.base.params

    def W_series(self) -> List[np.ndarray]:
        return [rescaling_Th(t, self.params.G) * U for t, U in zip(self.perturbed.times, self.perturbed.states)]

    def timelike_throughout(self) -> bool:
        return self.perturbed is not None and not self.perturbed.truncated

    def rate_check(self) -> Optional[dict]:
        if self.extraction is None:
            return None
        pred = predicted_limit_exponents(self.params, self.sigma)["W0"]
        obs = self.extraction.rates.get("W0")
        ok = obs is not None and abs(obs - pred) <= 0.25 * pred
        return {"observed": obs, "predicted": pred, "passed": bool(ok)}

    def checks(self) -> Dict[str, bool]:
        out = {"perturbed_timelike": self.timelike_throughout()}
        if self.extraction is not None:
            out["extraction_positive_W0"] = bool(np.all(self.extraction.W0[..., 0] > 0))
            out["W0_limit_rate"] = self.rate_check()["passed"]
        if self.match is not None:
            out["roundtrip_converged"] = bool(self.roundtrip is not None and self.roundtrip.converged)
            out["roundtrip_mismatch"] = self.match["relative_mismatch"] <= 1e-3
        return out

    def summary(self) -> dict:
        out = {"amplitude": self.amplitude, "sigma": self.sigma, "diagnostic": self.diagnostic,
               "perturbation_Hk": sobolev_norm(self.V0, self.base.config.k, self.d)}
        if self.perturbed is not None:
            out["perturbed_steps"] = self.perturbed.steps
            out["perturbed_truncated"] = self.perturbed.truncated
            out["perturbed_last_t"] = self.perturbed.last_t
        if self.extraction is not None:
            e = self.extraction
            out["extraction"] = {"max_error": float(np.max(e.error)), "fallback": e.fallback,
                                 "exponents": e.exponents, "fit_residual": e.fit_residual, "rates": e.rates,
                                 "rate_window": list(e.rate_window),
                                 "W0_min": float(np.min(e.W0[..., 0]))}
            out["rate_check"] = self.rate_check()
        if self.match is not None:
            out["match"] = {k: v for k, v in self.match.items() if k not in ("times", "relative", "scaled")}
        return out


def roundtrip_match(run: StabilityRun, sivp_config: Optional[SivpConfig] = None,
                    window_end: float = -1e-3, mu: Optional[float] = None) -> dict:
    """Solve the SIVP with the extracted data and compare with the perturbed run."""
    if run.extraction is None:
        raise ValueError("extraction missing")
    base_cfg = sivp_config or run.base.config
    cfg = SivpConfig(**{**base_cfg.__dict__, "t_end": window_end, "check_conditions": False})
    rt = solve_sivp(run.extraction.W0, run.params, cfg, d=run.d)
    run.roundtrip = rt
    if not rt.converged:
        raise RuntimeError(f"round-trip SIVP did not converge: {rt.diagnostic}")
    pt = {round(float(t), 13): j for j, t in enumerate(run.perturbed.times)}
    mu = run.params.G[0] + 0.02 if mu is None else mu
    k, d = run.base.config.k, run.d
    times, rel, scaled = [], [], []
    for j, t in enumerate(rt.times):
        if t > window_end:
            continue
        i = pt.get(round(float(t), 13))
        if i is None:
            continue
        UC = run.perturbed.states[i]
        Td = rescaling_T(t, run.params.G)
        VC, VS = Td * UC, Td * rt.U[j]
        rel.append(sobolev_norm(VC - VS, k, d) / sobolev_norm(VC, k, d))
        scaled.append((-t) ** (-mu) * sobolev_norm(UC - rt.U[j], k, d))
        times.append(float(t))
    if not times:
        raise ValueError("no common times between the perturbed run and the round-trip solution")
    match = {"times": times, "relative": rel, "scaled": scaled, "relative_mismatch": float(max(rel)),
             "scaled_max": float(max(scaled)), "mu": mu, "window": [float(times[0]), float(times[-1])]}
    run.match = match
    return match


def run_stability(v_star, params: FluidParameters, sivp_config: Optional[SivpConfig] = None,
                  config: Optional[StabilityConfig] = None, d: int = 1,
                  base: Optional[SivpRun] = None) -> StabilityRun:
    """Base SIVP, perturbed forward run, extraction and round trip."""
    cfg = config or StabilityConfig()
    scfg = sivp_config or SivpConfig()
    if base is None:
        base = solve_sivp(v_star, params, scfg, d=d)
    sigma = cfg.sigma_fraction * base.params.G[2]
    V0 = band_limited_perturbation(base.v_star.shape, cfg.amplitude, cfg.component, cfg.band, cfg.seed)
    out = StabilityRun(base=base, V0=V0, perturbed=None, sigma=sigma, amplitude=cfg.amplitude)
    if not base.converged:
        out.diagnostic = f"base SIVP failed: {base.diagnostic}"
        return out
    traj = run_perturbed(base, V0, base.times[0], cfg)
    out.perturbed = traj
    if traj.truncated:
        out.diagnostic = f"perturbed run truncated at t={traj.last_t:.3e}: {traj.diagnostic}"
        return out
    out.extraction = extract_asymptotic_data(traj, base.params, d=d, k=scfg.k, sigma=sigma)
    try:
        roundtrip_match(out, scfg, cfg.match_window)
    except (RuntimeError, ValueError) as exc:
        out.diagnostic = str(exc)
    return out


def _block(M, L, R):
    return np.linalg.norm(L @ M @ R, 2)


def euler_kappa_constants(params: FluidParameters, R: float, sigma: float, samples: int = 200,
                          seed: int = 0, t: float = -0.5, h: float = 1e-7) -> KappaConstants:
    """Constants of the backward-problem hypotheses for the perturbed Euler system.

    gamma1 = 2 / (rc^3 (gamma - 1)) with rc = 1 - R and kappa = G3 - sigma.
    The beta constants bound the blocks of

        M = (1/t) D_v B0 . B0^{-1} [Bc P v + t G]

    over |v| <= R around Z = (Z0, 0, 0, 0), Z0 in [rc, 1]:
    beta1 ~ |t| |P M P|, beta3 ~ R |t| |P M P_perp| / |P v|,
    beta5 ~ R |t| |P_perp M P| / |P v|, beta7 ~ R^2 |t| |P_perp M P_perp| / |P v|^2,
    and lambda3 ~ R |t G| / |v|^2.
    """
    rng = np.random.default_rng(seed)
    rc = 1.0 - R
    b1 = b3 = b5 = b7 = lam3 = 0.0
    for _ in range(samples):
        Z0 = rng.uniform(rc, 1.0)
        dirn = rng.standard_normal(4)
        v = R * rng.uniform(0.2, 1.0) * dirn / np.linalg.norm(dirn)
        U = np.array([Z0, 0.0, 0.0, 0.0]) + v
        cs = assemble_full(t, U, params)
        X = np.linalg.solve(cs.B0, cs.Bc @ (PROJ @ U) + t * cs.G)
        dB0 = (assemble_full(t, U + h * X, params).B0 - assemble_full(t, U - h * X, params).B0) / (2.0 * h)
        M = dB0 / t
        Pv = np.linalg.norm(v[1:])
        s = abs(t)
        b1 = max(b1, s * _block(M, PROJ, PROJ))
        if Pv > 0:
            b3 = max(b3, R * s * _block(M, PROJ, PERP) / Pv)
            b5 = max(b5, R * s * _block(M, PERP, PROJ) / Pv)
            b7 = max(b7, R**2 * s * _block(M, PERP, PERP) / Pv**2)
        lam3 = max(lam3, R * np.linalg.norm(t * cs.G) / np.dot(v, v))
    gamma1 = 2.0 / (rc**3 * params.cs2)
    return KappaConstants(kappa=float(params.G[2] - sigma), gamma1=float(gamma1), lambda3=float(lam3),
                          beta=tuple(float(b) for b in (0.0, b1, 0.0, b3, 0.0, b5, 0.0, b7)), bb=0.0, k=0)


def euler_kappa_report(params: FluidParameters, R: float = 1e-3, sigma: Optional[float] = None,
                       **kw) -> ConditionReport:
    """kappa-condition of the backward problem for the Euler system."""
    sigma = params.G[2] / 10.0 if sigma is None else sigma
    c = euler_kappa_constants(params, R, sigma, **kw)
    rep = check_backward_kappa(c)
    rep.samples = kw.get("samples", 200)
    rep.results[0].detail += (f"; gamma1={c.gamma1:.6g}, beta1={c.beta[1]:.3e}, beta3={c.beta[3]:.3e}, "
                              f"beta5={c.beta[5]:.3e}, beta7={c.beta[7]:.3e}, lambda3={c.lambda3:.3e}, "
                              f"R={R}, sigma={sigma:.6g}")
    return rep
