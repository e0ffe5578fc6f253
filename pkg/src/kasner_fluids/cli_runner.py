"""Configuration files, experiment orchestration, power-law fits and reports."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunReport",
    "fit_power_law",
    "load_config",
    "parse_config",
    "run",
    "EXIT_OK",
    "EXIT_PHYSICS",
    "EXIT_TOOL",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_PHYSICS, EXIT_TOOL = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems: Sequence[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


def fit_power_law(t, values, window: Optional[Sequence[float]] = None) -> Tuple[float, float, float]:
    """Least squares fit of log value = slope log|t| + intercept.

    Needs at least 8 points spanning one decade. Returns (slope, intercept,
    rms residual in log space).
    """
    t = np.abs(np.asarray(t, dtype=float))
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if np.any(v <= 0) or np.any(~np.isfinite(v)):
        raise ValueError("power-law fits need positive finite values")
    if len(t) < 8 or np.log10(t.max() / t.min()) < 1.0 - 1e-9:
        raise ValueError("need at least 8 points spanning one decade of |t|")
    x, y = np.log(t), np.log(v)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - y) ** 2)))
    return float(slope), float(icpt), resid


# schema: key -> (type, default)
SCHEMA: Dict[str, Tuple[type, Any]] = {
    "experiment": (str, "sivp"),
    "background.K": (float, 0.0),
    "background.A": (float, 0.0),
    "fluid.gamma": (float, 1.8),
    "grid.d": (int, 1),
    "grid.N": (int, 64),
    "times.T0": (float, -0.5),
    "times.t_end": (float, -1e-6),
    "times.n_start": (int, 3),
    "times.n_max": (int, 22),
    "integers.k": (int, 2),
    "integers.ell": (int, 0),
    "integers.ell0": (int, 0),
    "tolerances.sivp": (float, 1e-6),
    "times.steps_per_output": (int, 8),
    "tolerances.null": (float, 1e-3),
    "data.v0": (float, 1.0),
    "data.amplitude": (float, 0.1),
    "data.component": (int, 1),
    "data.mode": (int, 1),
    "perturbation.amplitude": (float, 0.05),
    "perturbation.component": (int, -1),
    "perturbation.sigma_fraction": (float, 0.1),
    "perturbation.band": (int, 2),
    "oracle.case": (str, "model"),
    "oracle.b": (float, 0.5),
    "oracle.source_power": (float, -1.0),
    "oracle.cs2": (float, 0.9),
    "oracle.sign": (int, 1),
    "oracle.Q0": (float, 1.0),
    "oracle.U3": (float, 0.3),
    "check.R": (float, 1e-3),
    "check.sigma_fraction": (float, 0.1),
    "lot.tau_max": (float, 23.0),
    "output.dir": (str, "out"),
    "seed": (int, 0),
    "workers": (int, 1),
}

EXPERIMENTS = ("sivp", "stability", "oracle", "check", "lot")


@dataclass
class RunConfig:
    """Resolved configuration; ``values`` holds every schema key."""

    values: Dict[str, Any] = field(default_factory=lambda: {k: v for k, (_, v) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            vals[k.replace("__", ".")] = v
        return RunConfig(vals)

    def validate(self) -> None:
        from .fluid_params import FluidDomainError, FluidParameters
        from .kasner_geometry import GeometryDomainError, KasnerBackground

        problems = []
        if self["experiment"] not in EXPERIMENTS:
            problems.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
        if self["grid.d"] not in (1, 2, 3):
            problems.append("grid.d: must be 1, 2 or 3")
        if self["grid.N"] < 4 or self["grid.N"] % 2:
            problems.append("grid.N: must be an even integer >= 4")
        if not self["times.T0"] < 0:
            problems.append("times.T0: must be negative")
        if not self["times.T0"] < self["times.t_end"] < 0:
            problems.append("times.t_end: must lie in (T0, 0)")
        if self["integers.k"] < 0:
            problems.append("integers.k: must be nonnegative")
        if self["tolerances.sivp"] <= 0:
            problems.append("tolerances.sivp: must be positive")
        if self["workers"] < 1:
            problems.append("workers: must be positive")
        if self["data.v0"] <= 0:
            problems.append("data.v0: must be positive")
        if self["data.component"] not in (0, 1, 2, 3):
            problems.append("data.component: must be 0..3")
        if self["oracle.case"] not in ("model", "q", "homogeneous"):
            problems.append("oracle.case: must be model, q or homogeneous")
        if self["oracle.sign"] not in (1, -1):
            problems.append("oracle.sign: must be +1 or -1")
        if self["experiment"] != "oracle" or self["oracle.case"] == "homogeneous":
            try:
                bg = KasnerBackground(self["background.K"], self["background.A"])
                params = FluidParameters(self["fluid.gamma"], bg)
                if self["experiment"] in ("sivp", "stability") and self["integers.ell"]:
                    if not params.with_ell(self["integers.ell"]).admissible:
                        problems.append("integers.ell: not admissible (need ell > G1/q)")
            except GeometryDomainError as exc:
                problems.append(f"background.K: {exc}")
            except FluidDomainError as exc:
                problems.append(f"fluid.gamma: {exc}")
        if problems:
            raise ConfigError(problems)


def parse_config(text: str) -> RunConfig:
    """Parse flat ``dotted.key = value`` lines; '#' starts a comment."""
    cfg = RunConfig()
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key=value")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"{key}: unknown key")
            continue
        typ = SCHEMA[key][0]
        try:
            cfg.values[key] = typ(float(val)) if typ is int else typ(val)
        except ValueError:
            problems.append(f"{key}: cannot parse {val!r} as {typ.__name__}")
    if problems:
        # report the remaining violations together with the parse errors
        try:
            cfg.validate()
        except ConfigError as exc:
            problems.extend(exc.problems)
        raise ConfigError(problems)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


@dataclass
class RunReport:
    """Outcome of one experiment."""

    experiment: str
    config: Dict[str, Any]
    checks: Dict[str, bool] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    series: Dict[str, List[float]] = field(default_factory=dict)
    diagnostic: str = ""
    tool_error: bool = False

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def exit_code(self) -> int:
        if self.tool_error:
            return EXIT_TOOL
        return EXIT_OK if self.passed else EXIT_PHYSICS

    def to_dict(self) -> dict:
        from . import __version__

        return {"experiment": self.experiment, "version": __version__, "config": self.config,
                "checks": self.checks, "passed": self.passed, "results": self.results,
                "diagnostic": self.diagnostic}

    def write(self, out_dir: str) -> List[str]:
        """Write report.json, series.csv and plot.gp; returns the paths."""
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        p = os.path.join(out_dir, "report.json")
        with open(p, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        paths.append(p)
        if self.series:
            cols = list(self.series)
            n = max(len(v) for v in self.series.values())
            p = os.path.join(out_dir, "series.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for i in range(n):
                    w.writerow([_fmt(self.series[c][i]) if i < len(self.series[c]) else "" for c in cols])
            paths.append(p)
            p = os.path.join(out_dir, "plot.gp")
            with open(p, "w") as fh:
                fh.write(_plot_script(cols))
            paths.append(p)
        return paths


def _fmt(x) -> str:
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not serializable: {type(x)}")


def _plot_script(cols: List[str]) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set logscale xy",
             f"set xlabel '{cols[0]}'"]
    plots = [f"'series.csv' using (abs(${1})):(abs(${i + 1})) with linespoints" for i in range(1, len(cols))]
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no series")
    lines.append("pause -1")
    return "\n".join(lines) + "\n"


def _params(cfg: RunConfig, ell: Optional[int] = None):
    from .fluid_params import FluidParameters
    from .kasner_geometry import KasnerBackground

    bg = KasnerBackground(cfg["background.K"], cfg["background.A"])
    params = FluidParameters(cfg["fluid.gamma"], bg)
    ell = ell or cfg["integers.ell"] or None
    return params.with_ell(ell) if ell else params


def initial_data(cfg: RunConfig) -> np.ndarray:
    """Asymptotic data v0 e_0 + amplitude sin(mode x) e_component on the configured grid."""
    from .grid_solver import grid_coordinates

    d, N = cfg["grid.d"], cfg["grid.N"]
    X = grid_coordinates(N, d)
    v = np.zeros((N,) * d + (4,))
    v[..., 0] = cfg["data.v0"]
    v[..., cfg["data.component"]] += cfg["data.amplitude"] * np.sin(cfg["data.mode"] * X[0])
    return v


def _sivp_config(cfg: RunConfig):
    from .grid_solver import EvolveControls
    from .sivp_driver import SivpConfig

    return SivpConfig(T0=cfg["times.T0"], ell=cfg["integers.ell"] or None, n_start=cfg["times.n_start"],
                      n_max=cfg["times.n_max"], tol=cfg["tolerances.sivp"], k=cfg["integers.k"],
                      workers=cfg["workers"], lot_tau_max=cfg["lot.tau_max"],
                      controls=EvolveControls(fixed_step=np.log(2.0) / 4.0 / cfg["times.steps_per_output"]))


def _run_sivp(cfg: RunConfig, rep: RunReport):
    from .sivp_driver import decay_fit, pressure_fit, solve_sivp

    params = _params(cfg)
    run_ = solve_sivp(initial_data(cfg), params, _sivp_config(cfg), d=cfg["grid.d"])
    rep.results.update({"lam": run_.lam, "mu": run_.mu, "p": run_.p, "ell": run_.params.ell,
                        "eps": run_.params.eps, "differences": run_.differences, "n_used": run_.n_used,
                        "trivial": run_.trivial, "diagnostic": run_.diagnostic})
    if run_.conditions is not None:
        rep.results["conditions"] = run_.conditions.to_dict()
    rep.checks["converged"] = run_.converged
    if not run_.converged:
        rep.diagnostic = run_.diagnostic
        return
    if not run_.trivial:
        shrink = run_.shrink_factors()
        rep.results["shrink_factors"] = shrink.tolist()
        rep.checks["cauchy_shrink"] = bool(np.all(shrink <= 0.5))
        fits = decay_fit(run_)
        rep.results["decay_fit"] = fits
        fitted = [f["slope"] for f in fits if not f["skipped"]]
        rep.checks["decay_rate"] = bool(all(s >= params.eps - 0.02 for s in fitted))
        pf = pressure_fit(run_)
        rep.results["pressure_fit"] = pf
        rep.checks["pressure_slope"] = pf["relative_error"] <= 0.02
        rep.checks["timelike"] = pf["timelike"]
    W = run_.W()
    from .grid_solver import sobolev_norm

    rep.series["t"] = run_.times.tolist()
    for a in range(4):
        rep.series[f"W{a}_minus_vstar_H{cfg['integers.k']}"] = [
            sobolev_norm(W[j][..., a] - run_.v_star[..., a], cfg["integers.k"], run_.d) for j in range(len(W))]


def _run_lot(cfg: RunConfig, rep: RunReport):
    from .lot_builder import build_lot, lot_residual_rates

    params = _params(cfg, cfg["integers.ell"] or 4)
    seq = build_lot(initial_data(cfg), params.ell, params, cfg["times.T0"], d=cfg["grid.d"],
                    tau_max=cfg["lot.tau_max"], norm_k=cfg["integers.k"])
    rep.series["t"] = seq.times.tolist()
    if seq.diff_norms is None:
        rep.results["rates"] = []
        return
    for m in range(1, seq.ell):
        rep.series[f"diff_W{m}_W{m - 1}"] = seq.diff_norms[m - 1].tolist()
    rates = lot_residual_rates(seq)
    rep.results["rates"] = rates
    for r in rates:
        if not r["skipped"]:
            rep.checks[f"rate_m{r['m']}"] = abs(r["slope"] - r["predicted"]) <= 0.2 * r["predicted"]


def _run_stability(cfg: RunConfig, rep: RunReport):
    from .stability_driver import StabilityConfig, run_stability

    params = _params(cfg)
    scfg = StabilityConfig(amplitude=cfg["perturbation.amplitude"], component=cfg["perturbation.component"],
                           t_extract=-abs(cfg["times.t_end"]), sigma_fraction=cfg["perturbation.sigma_fraction"],
                           band=cfg["perturbation.band"], seed=cfg["seed"])
    res = run_stability(initial_data(cfg), params, _sivp_config(cfg), scfg, d=cfg["grid.d"])
    rep.results.update(res.summary())
    rep.checks.update(res.checks())
    rep.diagnostic = res.diagnostic
    if res.perturbed is not None and res.perturbed.times:
        from .grid_solver import sobolev_norm

        rep.series["t"] = list(res.perturbed.times)
        W = res.W_series()
        for a in range(4):
            rep.series[f"WC{a}_H{cfg['integers.k']}"] = [sobolev_norm(w[..., a], cfg["integers.k"], res.d) for w in W]


def _run_check(cfg: RunConfig, rep: RunReport):
    from .stability_driver import euler_kappa_report

    params = _params(cfg)
    for label, frac in (("configured", cfg["check.sigma_fraction"]),):
        kr = euler_kappa_report(params, R=cfg["check.R"], sigma=frac * params.G[2])
        rep.results[f"kappa_{label}"] = kr.to_dict()
        rep.checks[f"kappa_{label}"] = kr.passed
    rep.results["regime"] = params.regime
    rep.results["G"] = list(params.G)
    rep.results["eps"] = params.eps
    rep.results["q"] = params.q
    rep.checks["stable_regime"] = params.stable


def _run_oracle(cfg: RunConfig, rep: RunReport):
    from . import ode_oracles as oo

    case = cfg["oracle.case"]
    rep.results["case"] = case
    if case == "model":
        from .fuchsian_core import scalar_model_system
        from .grid_solver import EvolveControls, FieldState, evolve

        b, pw = cfg["oracle.b"], cfg["oracle.source_power"]
        F = None if pw < 0 else (lambda t, pw=pw: (-t) ** pw)
        sys = scalar_model_system(b, F)
        taus = np.linspace(np.log(2.0), np.log(2.0) + 5.0, 51)
        traj = evolve(sys, FieldState(np.array([1.0]), -0.5, d=0), taus[1:], EvolveControls(fixed_step=1e-3))
        exact = [oo.model_exact_negative(b, F, -0.5, 1.0, t) for t in traj.times]
        num = [s[0] for s in traj.states]
        err = max(abs(a - e) / max(abs(e), 1e-300) for a, e in zip(num, exact))
        rep.series.update({"t": list(traj.times), "numerical": num, "exact": exact})
        rep.results["max_relative_error"] = err
        rep.checks["model_relative_error"] = err <= 1e-8
    elif case == "q":
        sign = cfg["oracle.sign"]
        rng = (1e-3, 1.0) if sign == 1 else (1.0, 1e-4)
        tr = oo.q_equation(cfg["oracle.cs2"], sign, cfg["oracle.Q0"], rng)
        rep.series.update({"tau": tr.tau.tolist(), "Q": tr.Q.tolist(), "drift": tr.drift.tolist()})
        rep.results["max_drift"] = tr.max_drift
        rep.results["truncated"] = tr.truncated
        if sign == 1:
            rep.checks["invariant_drift"] = tr.max_drift <= 1e-7
        else:
            lim = 1.0 / np.sqrt(1.0 - cfg["oracle.cs2"])
            val = float(tr.Q[-1] / tr.tau[-1])
            rep.results["scaled_limit"] = val
            rep.checks["lower_limit"] = abs(val - lim) <= 1e-3
    else:
        params = _params(cfg)
        tr = oo.homogeneous_euler([1.0, 0.0, 0.0, cfg["oracle.U3"]], params,
                                  (cfg["times.T0"], cfg["times.t_end"]), null_tol=cfg["tolerances.null"])
        W = oo.frame_history(tr.t, tr.U, params)
        rep.series.update({"t": tr.t.tolist(), "margin": tr.margin.tolist()})
        for a in range(4):
            rep.series[f"W{a}"] = W[:, a].tolist()
        rep.results.update({"regime": params.regime, "timelike_lost": tr.timelike_lost,
                            "t_tilde_lost": tr.t_tilde_lost, "diagnostic": tr.diagnostic})
        if params.regime == "borderline":
            drift = float(np.max(np.ptp(W[:, [0, 3]], axis=0)))
            rep.results["frame_drift"] = drift
            rep.checks["frame_constant"] = drift <= 1e-6
        elif params.regime == "unstable":
            rep.checks["timelike_lost"] = tr.timelike_lost
        else:
            rep.checks["timelike"] = not tr.timelike_lost


RUNNERS = {"sivp": _run_sivp, "lot": _run_lot, "stability": _run_stability, "check": _run_check,
           "oracle": _run_oracle}


def run(config: RunConfig, out_dir: Optional[str] = None) -> RunReport:
    """Validate, execute and write one experiment."""
    rep = RunReport(experiment=config["experiment"], config=dict(config.values))
    try:
        config.validate()
    except ConfigError as exc:
        rep.tool_error = True
        rep.diagnostic = "invalid configuration: " + "; ".join(exc.problems)
        rep.results["problems"] = exc.problems
    else:
        np.random.seed(config["seed"])
        try:
            RUNNERS[config["experiment"]](config, rep)
            rep.checks = {k: bool(v) for k, v in rep.checks.items()}
        except Exception as exc:  # reported as a tool failure with the message
            log.exception("experiment failed")
            rep.tool_error = True
            rep.diagnostic = f"{type(exc).__name__}: {exc}"
    target = out_dir or config["output.dir"]
    if target:
        rep.results["files"] = rep.write(target)
    return rep
