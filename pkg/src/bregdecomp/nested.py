"""Nested Bregman outer iterations around the decomposition solvers.

Each outer step replaces the first penalty g by its Bregman distance at the
previous iterate (anchor u_{l-1}, subgradient p_{l-1}) and re-solves the
decomposition problem; the share of the second component shrinks
monotonically along the iteration.  Three inner solvers are supported:

* ``noisefree``     -- equality-constrained data fit, enforced by running
                       Bregman iterations down to a tight residual tolerance;
* ``morozov``       -- the residual-constrained solve via multiplier
                       bisection (the workhorse for noisy data);
* ``bregman-inner`` -- a full discrepancy-stopped Bregman loop per outer
                       step, with the inner subgradient added onto p.

Subgradient updates: when g is differentiable, p_l = grad g(u_l); when only
h is (or is Moreau-smoothed), p_l = p_{l-1} + grad h(v_l); otherwise the
residual form p_l = p_{l-1} + lambda_l * A^T(f - A(u_l + v_l)) built from the
multiplier of the constrained solve.

Runs record a trajectory of per-step states with the scalar correlation of
the two components; the stopping index is the first interior local minimum
of that series (never the first step), falling back to the last step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bregman import bregman_run
from .config import DEFAULT_CONFIG
from .diagnostics import (first_local_min, psnr, scalar_correlation,
                          subgradient_certificate)
from .errors import CertificateFailure, DiscrepancyNeverMet, NonConverged, ZeroSignal
from .fields import Field
from .regularizers import bregman_shift, smooth_grad, value
from .solvers import solve_morozov

_SMOOTH_KINDS = ("h1_sq", "sq_l2")


@dataclass
class NestedState:
    l: int
    u: Field
    v: Field
    p: Field
    lambda_used: float
    h_value: float
    g_bregman_value: float
    residual: float
    correlation: float
    psnr_u: float | None = None
    psnr_v: float | None = None
    psnr_x: float | None = None
    stationary: bool = False
    inner_steps: int = 0


@dataclass
class Trajectory:
    states: list
    stop_index: int
    stop_rule: str
    fired: bool

    def state_at(self, l) -> NestedState:
        return self.states[l - 1]

    def stopped_state(self) -> NestedState:
        return self.state_at(self.stop_index)

    def correlation_series(self):
        return [s.correlation for s in self.states]

    def psnr_sum_series(self):
        return [None if s.psnr_u is None else s.psnr_u + s.psnr_v
                for s in self.states]


def default_p_rule(g, h):
    """Differentiable g wins; otherwise fall back to the residual form."""
    if g is not None and g.kind in _SMOOTH_KINDS:
        return "grad_g"
    return "residual"


def subgradient_update(kind, prev_p, solve_result, g, h, lam, prob,
                       cfg=DEFAULT_CONFIG, certify=False):
    """Produce p_l in the subdifferential of the base g at u_l.

    ``kind`` is one of "auto", "grad_g", "grad_h", "residual"; ``lam`` is the
    multiplier of the constrained solve (used by the residual rule).
    """
    if kind == "auto":
        kind = default_p_rule(g, h)
    u, v = solve_result.u, solve_result.v
    grid = u.grid
    if prev_p is None:
        prev_p = Field(grid, np.zeros(grid.shape))
    if kind == "grad_g":
        p = smooth_grad(replace(g, tilt=None), u, cfg)
    elif kind == "grad_h":
        p = Field(grid, prev_p.values + smooth_grad(h, v, cfg).values)
    elif kind == "residual":
        ax = prob.op.apply_array(u.values + v.values)
        p = Field(grid, prev_p.values
                  + lam * prob.op.adjoint_array(prob.f_delta.values - ax))
    else:
        raise ValueError(f"unknown subgradient rule {kind!r}")
    if certify:
        ok, worst = subgradient_certificate(g, u, p, cfg)
        if not ok:
            raise CertificateFailure(
                f"subgradient probes violated by {worst:.3e}; the inner solve "
                "is likely under-converged")
    return p


def _safe_correlation(u, v):
    try:
        return scalar_correlation(u, v)
    except ZeroSignal:
        return float("nan")


def _metrics(state_kw, prob, truth):
    u, v = state_kw["u"], state_kw["v"]
    ax = prob.op.apply_array(u.values + v.values)
    state_kw["residual"] = float(np.linalg.norm(ax - prob.f_delta.values))
    state_kw["correlation"] = _safe_correlation(u, v)
    if truth is not None:
        state_kw["psnr_u"] = psnr(u, truth.u_true)
        state_kw["psnr_v"] = psnr(v, truth.v_true)
        state_kw["psnr_x"] = psnr(Field(u.grid, u.values + v.values),
                                  truth.x_true)
    return state_kw


def _shifted_problem(prob, prev, cfg):
    if prev is None:
        return prob, prob.g
    g_l = bregman_shift(prob.g, prev.p, prev.u, cfg)
    return prob.with_regularizers(g_l, prob.h), g_l


def nested_morozov_step(prev, prob, cfg=DEFAULT_CONFIG, p_rule="auto",
                        truth=None, warm=None, lambda_hint=None,
                        certify=False):
    """One outer step with the residual-constrained inner solve.

    ``prev`` is None for the first step.  If the constrained solve lands in
    the interior (multiplier at the bracket floor with residual strictly
    inside), the previous iterate is already optimal: the state is returned
    unchanged and flagged stationary.
    """
    prob_l, g_l = _shifted_problem(prob, prev, cfg)
    res = solve_morozov(prob_l, cfg, lambda_hint=lambda_hint, warm=warm)
    l = 1 if prev is None else prev.l + 1
    if res.interior and prev is not None:
        state = replace(prev, l=l, stationary=True)
        state.lambda_used = res.lam
        return state, warm
    p = subgradient_update(p_rule, None if prev is None else prev.p, res,
                           prob.g, prob.h, res.lam, prob, cfg, certify)
    kw = dict(l=l, u=res.u, v=res.v, p=p, lambda_used=res.lam,
              h_value=value(prob.h, res.v, cfg),
              g_bregman_value=value(g_l, res.u, cfg),
              inner_steps=res.inner_iters)
    return NestedState(**_metrics(kw, prob, truth)), res.state


def nested_bregman_step(prev, prob, tau, cfg=DEFAULT_CONFIG,
                        bregman_lambda=1.0, max_inner=200, truth=None):
    """One outer step running a discrepancy-stopped inner Bregman loop.

    The inner loop accumulates its own image-space subgradient; at the
    stopping iterate that subgradient is added onto p.
    """
    if prob.delta <= 0:
        raise ValueError("the discrepancy-stopped inner loop needs delta > 0")
    prob_l, g_l = _shifted_problem(prob, prev, cfg)
    run = bregman_run(prob_l, bregman_lambda, cfg, tau=tau, max_k=max_inner,
                      record_values=False)
    if not run.stopped:
        raise DiscrepancyNeverMet(
            f"inner Bregman loop did not reach tau*delta in {max_inner} steps")
    fin = run.final()
    l = 1 if prev is None else prev.l + 1
    prev_p = (np.zeros(prob.grid.shape) if prev is None else prev.p.values)
    p = Field(prob.grid, prev_p + fin.xi.values)
    kw = dict(l=l, u=fin.u, v=fin.v, p=p, lambda_used=bregman_lambda,
              h_value=value(prob.h, fin.v, cfg),
              g_bregman_value=value(g_l, fin.u, cfg),
              inner_steps=fin.k)
    return NestedState(**_metrics(kw, prob, truth)), None


def nested_noisefree_step(prev, prob, eps_eq, cfg=DEFAULT_CONFIG,
                          p_rule="auto", bregman_lambda=1.0, max_inner=500,
                          truth=None):
    """One outer step with the equality constraint enforced by Bregman
    iterations down to residual <= eps_eq."""
    prob_l, g_l = _shifted_problem(prob, prev, cfg)
    run = bregman_run(prob_l, bregman_lambda, cfg, stop_residual=eps_eq,
                      max_k=max_inner, record_values=False)
    if not run.stopped:
        raise NonConverged(
            f"equality constraint not reached: residual "
            f"{run.states[-1].residual:.3e} > {eps_eq:.3e} after {max_inner} "
            "inner Bregman steps")
    fin = run.final()
    l = 1 if prev is None else prev.l + 1
    if p_rule == "auto":
        p_rule = default_p_rule(prob.g, prob.h)
    if p_rule == "grad_g":
        p = smooth_grad(replace(prob.g, tilt=None), fin.u, cfg)
    else:
        prev_p = (np.zeros(prob.grid.shape) if prev is None else prev.p.values)
        p = Field(prob.grid, prev_p + fin.xi.values)
    kw = dict(l=l, u=fin.u, v=fin.v, p=p, lambda_used=bregman_lambda,
              h_value=value(prob.h, fin.v, cfg),
              g_bregman_value=value(g_l, fin.u, cfg),
              inner_steps=fin.k)
    return NestedState(**_metrics(kw, prob, truth)), None


def nested_noisefree_run(prob, max_outer, cfg=DEFAULT_CONFIG, eps_eq=None,
                         bregman_lambda=1.0, max_inner=500, truth=None,
                         p_rule="auto"):
    """Run the noise-free algorithm for max_outer steps (no early stop)."""
    return run_nested(prob, "noisefree", max_outer, cfg,
                      stop_rule="max-outer", truth=truth, eps_eq=eps_eq,
                      bregman_lambda=bregman_lambda,
                      max_inner_bregman=max_inner, p_rule=p_rule)


def run_nested(prob, algo, max_outer, cfg=DEFAULT_CONFIG, *, tau=1.001,
               stop_rule="first-local-min", truth=None, halt_on_stop=True,
               p_rule="auto", bregman_lambda=1.0, max_inner_bregman=200,
               eps_eq=None, certify=False, progress=None):
    """Drive an outer iteration and record its trajectory.

    ``algo`` is one of "noisefree", "morozov", "bregman-inner".  With
    stop_rule "first-local-min" and halt_on_stop the loop ends two steps
    after the local minimum of the scalar correlation becomes detectable;
    otherwise all max_outer steps run and the index is selected post hoc.
    """
    if algo not in ("noisefree", "morozov", "bregman-inner"):
        raise ValueError(f"unknown algorithm {algo!r}")
    if algo == "noisefree" and eps_eq is None:
        eps_eq = 1e-8 * prob.f_delta.norm()

    states = []
    corr = []
    prev = None
    warm = None
    lambda_hint = None
    fired = None

    for l in range(1, max_outer + 1):
        if algo == "morozov":
            state, warm = nested_morozov_step(
                prev, prob, cfg, p_rule=p_rule, truth=truth, warm=warm,
                lambda_hint=lambda_hint, certify=certify)
            lambda_hint = state.lambda_used
        elif algo == "bregman-inner":
            state, _ = nested_bregman_step(
                prev, prob, tau, cfg, bregman_lambda=bregman_lambda,
                max_inner=max_inner_bregman, truth=truth)
        else:
            state, _ = nested_noisefree_step(
                prev, prob, eps_eq, cfg, p_rule=p_rule,
                bregman_lambda=bregman_lambda, max_inner=max_inner_bregman,
                truth=truth)
        states.append(state)
        corr.append(state.correlation)
        if progress is not None:
            progress(state)
        prev = state
        if state.stationary:
            break
        if fired is None:
            idx = first_local_min(corr)
            if idx is not None:
                fired = idx
                if stop_rule == "first-local-min" and halt_on_stop:
                    break

    if fired is None:
        fired = first_local_min(corr)

    if stop_rule == "first-local-min":
        stop_index = fired if fired is not None else len(states)
        used = "first-local-min" if fired is not None else "max-outer"
    elif stop_rule == "best-psnr-oracle":
        if truth is None:
            raise ValueError("best-psnr-oracle needs ground truth")
        sums = [s.psnr_u + s.psnr_v for s in states]
        stop_index = int(np.argmax(sums)) + 1
        used = "best-psnr-oracle"
    elif stop_rule == "max-outer":
        stop_index = len(states)
        used = "max-outer"
    else:
        raise ValueError(f"unknown stop rule {stop_rule!r}")

    return Trajectory(states=states, stop_index=stop_index, stop_rule=used,
                      fired=fired is not None)
