"""Experiment harness: build problems from a flat config, run an algorithm,
and write a self-describing run directory.

A run directory contains:

* ``config.txt``      -- effective flat key=value config (rerunning from it
                         reproduces every CSV bitwise)
* ``trajectory.csv``  -- per-outer-step metrics for the nested algorithms
* ``bregman.csv``     -- per-step metrics for the classic Bregman mode
* ``bound.csv``       -- h(v_l) against the theoretical bound h(0)+g(x)/l
* ``summary.txt``     -- stop index and headline metrics
* FIELD files for the true/final/stopped components, PGM previews for 2D
* ``steps/``          -- optional per-step component snapshots (``snapshots``)
* ``figures/*.png``   -- optional rendered report (``figures=true``)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from . import regularizers as regs
from .bregman import bregman_run
from .config import SolverConfig
from .diagnostics import bound_tracker, psnr
from .errors import ConfigError
from .experiments import gen_exp1, gen_exp2, gen_exp3
from .fieldio import write_csv, write_field, write_pgm
from .fields import Field
from .nested import Trajectory, run_nested
from .regularizers import value
from .solvers import DecompositionProblem, solve_morozov, solve_tikhonov

ALGOS = ("noisefree", "morozov", "bregman-inner", "single-step-tikhonov",
         "single-step-morozov", "classic-bregman")
EXPERIMENTS = ("exp1", "exp2", "exp3")

# per-experiment defaults: grid size, weights, outer cap, smoothing
_DEFAULTS = {
    "exp1": dict(size=300, alpha=1000.0, beta=1.0, max_outer=100, mu=0.0),
    "exp2": dict(size=96, alpha=1000.0, beta=1.0, max_outer=50, mu=0.0),
    "exp3": dict(size=25, alpha1=5.0, beta1=5.0, alpha2=1.0, beta2=1.0,
                 max_outer=10, mu=1e-3),
}
# the discrepancy-stopped inner loop depends on absolute weights; these are
# the 4x-scaled values matched to the ratio-1000 single-step solve
_EXP2_BREGMAN_WEIGHTS = dict(alpha=465.0, beta=0.465)


@dataclass
class RunConfig:
    experiment: str = "exp1"
    algo: str = "morozov"
    seed: int = 0
    noise_std: float = 0.05
    size: int | None = None
    alpha: float | None = None
    beta: float | None = None
    alpha1: float | None = None
    beta1: float | None = None
    alpha2: float | None = None
    beta2: float | None = None
    omega: tuple = (0.25, 0.5)
    tau: float = 1.001
    max_outer: int | None = None
    inner_tol: float = 1e-6
    max_inner: int = 40000
    moreau_mu: float | None = None
    blur_std: float = 1.0
    out: str = "run_out"
    swap_roles: bool = False
    figures: bool = False
    halt_on_stop: bool = True
    snapshots: bool = False          # write per-step component FIELD files
    bregman_lambda: float | None = None
    max_inner_bregman: int = 200

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if self.noise_std < 0 or self.tau <= 0 or self.inner_tol <= 0:
            raise ConfigError("noise-std, tau and inner-tol must be positive")

    def resolved(self):
        """Fill in experiment-dependent defaults."""
        d = dict(_DEFAULTS[self.experiment])
        if (self.experiment == "exp2" and self.algo == "bregman-inner"
                and self.alpha is None and self.beta is None):
            d.update(_EXP2_BREGMAN_WEIGHTS)
        out = replace(self)
        for name in ("size", "max_outer"):
            if getattr(out, name) is None:
                setattr(out, name, d[name])
        for name in ("alpha", "beta", "alpha1", "beta1", "alpha2", "beta2"):
            if getattr(out, name) is None and name in d:
                setattr(out, name, d[name])
        if out.moreau_mu is None:
            out.moreau_mu = d.get("mu", 0.0)
        return out


def config_items(cfg: RunConfig):
    """Flat key=value view (CLI names, '-' separators)."""
    items = []
    for f in dc_fields(cfg):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        if f.name == "omega":
            val = ",".join(f"{w:g}" for w in val)
        elif isinstance(val, bool):
            val = "true" if val else "false"
        items.append((f.name.replace("_", "-"), str(val)))
    return items


def parse_config_text(text):
    """Parse flat key=value lines (the echoed config format)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def build_truth(cfg: RunConfig):
    noise = 0.0 if cfg.algo == "noisefree" else cfg.noise_std
    if cfg.experiment == "exp1":
        return gen_exp1(n=cfg.size, seed=cfg.seed, noise_std=noise)
    if cfg.experiment == "exp2":
        return gen_exp2(side=cfg.size, seed=cfg.seed, noise_std=noise,
                        blur_std=cfg.blur_std)
    return gen_exp3(subsquare=cfg.size, seed=cfg.seed, noise_std=noise,
                    omega=cfg.omega)


def build_regularizers(cfg: RunConfig):
    mu = cfg.moreau_mu or 0.0
    if cfg.experiment == "exp1":
        return regs.h1_sq(cfg.alpha), regs.l1(cfg.beta, mu=mu)
    if cfg.experiment == "exp2":
        return regs.h1_sq(cfg.alpha), regs.tv_iso(cfg.beta, mu=mu)
    return (regs.tgv2(cfg.alpha1, cfg.beta1, mu=mu),
            regs.tgv_osci(cfg.alpha2, cfg.beta2, cfg.omega, mu=mu))


def build_problem(cfg: RunConfig):
    cfg = cfg.resolved()
    truth = build_truth(cfg)
    g, h = build_regularizers(cfg)
    if cfg.swap_roles:
        g, h = h, g
        truth = replace(truth, u_true=truth.v_true, v_true=truth.u_true)
    prob = DecompositionProblem(truth.op, truth.f_delta, truth.delta, g, h)
    return cfg, truth, prob


def solver_config(cfg: RunConfig):
    return SolverConfig(max_inner_iters=cfg.max_inner, rel_tol=cfg.inner_tol,
                        seed=cfg.seed)


TRAJECTORY_HEADER = ["l", "h_value", "g_bregman_value", "residual", "lambda",
                     "correlation", "psnr_u", "psnr_v", "psnr_x", "stop_flag"]
BREGMAN_HEADER = ["k", "residual", "g_value", "h_value", "objective"]
SWEEP_HEADER = ["alpha", "lambda", "residual", "psnr_u", "psnr_v", "psnr_x",
                "psnr_sum"]


def trajectory_rows(traj: Trajectory):
    rows = []
    for s in traj.states:
        rows.append([s.l, s.h_value, s.g_bregman_value, s.residual,
                     s.lambda_used, s.correlation, s.psnr_u, s.psnr_v,
                     s.psnr_x, 1 if s.l == traj.stop_index else 0])
    return rows


def _write_component_files(out_dir, tag, u: Field, v: Field):
    write_field(os.path.join(out_dir, f"u_{tag}.field"), u)
    write_field(os.path.join(out_dir, f"v_{tag}.field"), v)
    x = Field(u.grid, u.values + v.values)
    write_field(os.path.join(out_dir, f"x_{tag}.field"), x)
    if u.grid.ndim == 2:
        for name, fld in (("u", u), ("v", v), ("x", x)):
            write_pgm(os.path.join(out_dir, f"{name}_{tag}.pgm"), fld)


@dataclass
class RunResult:
    config: RunConfig
    out_dir: str
    trajectory: Trajectory | None
    summary: dict = field(default_factory=dict)


def run_experiment(cfg: RunConfig, config_text=None):
    cfg, truth, prob = build_problem(cfg)
    scfg = solver_config(cfg)
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        for key, val in config_items(cfg):
            fh.write(f"{key}={val}\n")
    if config_text is not None:
        with open(os.path.join(out_dir, "config_input.txt"), "w") as fh:
            fh.write(config_text)

    _write_component_files(out_dir, "true", truth.u_true, truth.v_true)
    write_field(os.path.join(out_dir, "f_delta.field"), truth.f_delta)
    if truth.f_delta.grid.ndim == 2:
        write_pgm(os.path.join(out_dir, "f_delta.pgm"), truth.f_delta)

    summary = {
        "experiment": cfg.experiment, "algo": cfg.algo,
        "delta": truth.delta,
    }
    traj = None

    if cfg.algo in ("noisefree", "morozov", "bregman-inner"):
        progress = None
        if cfg.snapshots:
            step_dir = os.path.join(out_dir, "steps")
            os.makedirs(step_dir, exist_ok=True)

            def progress(state):
                write_field(os.path.join(step_dir, f"u_{state.l:04d}.field"),
                            state.u)
                write_field(os.path.join(step_dir, f"v_{state.l:04d}.field"),
                            state.v)

        traj = run_nested(
            prob, cfg.algo, cfg.max_outer, scfg, tau=cfg.tau, truth=truth,
            halt_on_stop=cfg.halt_on_stop,
            bregman_lambda=cfg.bregman_lambda or 1.0,
            max_inner_bregman=cfg.max_inner_bregman, progress=progress)
        write_csv(os.path.join(out_dir, "trajectory.csv"), TRAJECTORY_HEADER,
                  trajectory_rows(traj))
        g_xbar = value(prob.g, truth.x_true, scfg)
        h0 = value(prob.h, Field(prob.grid, np.zeros(prob.grid.shape)), scfg)
        rows = bound_tracker([s.h_value for s in traj.states], h0, g_xbar)
        write_csv(os.path.join(out_dir, "bound.csv"),
                  ["l", "h_value", "bound", "ok"],
                  [[r.l, r.h_value, r.bound, int(r.ok)] for r in rows])
        stop = traj.stopped_state()
        best = max(range(len(traj.states)),
                   key=lambda i: traj.states[i].psnr_u + traj.states[i].psnr_v)
        _write_component_files(out_dir, "stop", stop.u, stop.v)
        last = traj.states[-1]
        _write_component_files(out_dir, "final", last.u, last.v)
        summary.update({
            "stop_index": traj.stop_index,
            "stop_rule": traj.stop_rule,
            "psnr_sum_stop": stop.psnr_u + stop.psnr_v,
            "psnr_sum_max": traj.states[best].psnr_u + traj.states[best].psnr_v,
            "psnr_max_index": best + 1,
            "residual_stop": stop.residual,
            "g_xbar": g_xbar,
        })
    elif cfg.algo == "classic-bregman":
        anchor = solve_morozov(prob, scfg)
        lam = cfg.bregman_lambda or anchor.lam / 4.0
        run = bregman_run(prob, lam, scfg, tau=cfg.tau,
                          max_k=cfg.max_outer, record_values=True)
        write_csv(os.path.join(out_dir, "bregman.csv"), BREGMAN_HEADER,
                  [[s.k, s.residual, s.g_value, s.h_value, s.objective]
                   for s in run.states])
        fin = run.final()
        _write_component_files(out_dir, "final", fin.u, fin.v)
        summary.update({
            "lambda": lam, "stop_index": run.stop_index,
            "steps": len(run.states), "residual_final": fin.residual,
            "psnr_u": psnr(fin.u, truth.u_true),
            "psnr_v": psnr(fin.v, truth.v_true),
        })
    else:
        if cfg.algo == "single-step-tikhonov":
            res = solve_tikhonov(prob, 1.0, scfg)
        else:
            res = solve_morozov(prob, scfg)
        _write_component_files(out_dir, "final", res.u, res.v)
        write_csv(os.path.join(out_dir, "trajectory.csv"), TRAJECTORY_HEADER,
                  [[1, value(prob.h, res.v, scfg), value(prob.g, res.u, scfg),
                    res.residual, res.lam, "", psnr(res.u, truth.u_true),
                    psnr(res.v, truth.v_true),
                    psnr(res.x(), truth.x_true), 1]])
        summary.update({
            "lambda": res.lam, "residual": res.residual,
            "interior": res.interior,
            "psnr_u": psnr(res.u, truth.u_true),
            "psnr_v": psnr(res.v, truth.v_true),
            "psnr_x": psnr(res.x(), truth.x_true),
        })

    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        for key, val in summary.items():
            fh.write(f"{key}={val}\n")

    if cfg.figures:
        from .report import render_run_figures
        render_run_figures(out_dir)
    return RunResult(config=cfg, out_dir=out_dir, trajectory=traj,
                     summary=summary)


def parse_grid_spec(spec):
    """Parse 'lo:hi:log|lin:count' into an array of parameter values."""
    parts = spec.split(":")
    if len(parts) != 4 or parts[2] not in ("log", "lin"):
        raise ConfigError(
            f"grid spec {spec!r} must look like 1e-2:1e4:log:200")
    lo, hi, kind, count = float(parts[0]), float(parts[1]), parts[2], int(parts[3])
    if count < 2 or lo <= 0 and kind == "log":
        raise ConfigError(f"bad grid spec {spec!r}")
    if kind == "log":
        return np.logspace(np.log10(lo), np.log10(hi), count)
    return np.linspace(lo, hi, count)


def run_sweep(cfg: RunConfig, alphas, mode="morozov-single-step"):
    """PSNR-vs-alpha curves from repeated single-step solves (beta fixed)."""
    if mode not in ("morozov-single-step", "tikhonov-single-step"):
        raise ConfigError(f"unknown sweep mode {mode!r}")
    if cfg.experiment == "exp3":
        raise ConfigError("sweep mode supports exp1 and exp2 (single weight)")
    cfg, truth, _ = build_problem(cfg)
    scfg = solver_config(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        for key, val in config_items(cfg):
            fh.write(f"{key}={val}\n")
        fh.write(f"sweep-mode={mode}\n")
        fh.write(f"sweep-count={len(alphas)}\n")

    rows = []
    warm = None
    hint = None
    for a in alphas:
        sub = replace(cfg, alpha=float(a))
        g, h = build_regularizers(sub)
        prob = DecompositionProblem(truth.op, truth.f_delta, truth.delta, g, h)
        if mode == "morozov-single-step":
            res = solve_morozov(prob, scfg, lambda_hint=hint, warm=warm)
            hint, warm = res.lam, res.state
        else:
            res = solve_tikhonov(prob, 1.0, scfg, warm=warm)
            warm = res.state
        pu = psnr(res.u, truth.u_true)
        pv = psnr(res.v, truth.v_true)
        px = psnr(res.x(), truth.x_true)
        rows.append([float(a), res.lam, res.residual, pu, pv, px, pu + pv])
    write_csv(os.path.join(cfg.out, "sweep.csv"), SWEEP_HEADER, rows)
    if cfg.figures:
        from .report import render_sweep_figures
        render_sweep_figures(cfg.out)
    return rows
