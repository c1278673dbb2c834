"""Classical Bregman iterations for the composite two-component penalty.

Each step solves the shifted-data Tikhonov problem

    min_{u,v}  lambda/2 * ||A(u+v) - (f + zeta_{k-1})||^2 + g(u) + h(v)

with zeta_{k-1} the accumulated residuals sum_{i<k} (f - A(u_i + v_i)); this
is the standard equivalent form of penalizing the Bregman distance of g + h
at the previous iterate.  The image-space subgradient is maintained through

    xi_k = xi_{k-1} - lambda * A^T (A x_k - f),

which keeps xi_k = lambda * A^T zeta_k up to roundoff.  On noisy data the
run stops at the first iterate with residual below tau * delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import NonConverged
from .fields import Field
from .regularizers import value
from .solvers import solve_tikhonov


@dataclass
class BregmanState:
    k: int
    u: Field
    v: Field
    xi: Field
    residual: float          # vs the original data, not the shifted data
    g_value: float | None = None
    h_value: float | None = None
    objective: float | None = None


@dataclass
class BregmanRun:
    states: list
    stop_index: int | None   # 1-based index where the threshold fired
    threshold: float | None

    @property
    def stopped(self):
        return self.stop_index is not None

    def final(self) -> BregmanState:
        if self.stop_index is not None:
            return self.states[self.stop_index - 1]
        return self.states[-1]


def discrepancy_index(residuals, tau, delta):
    """Smallest 1-based index with residual < tau*delta, else None."""
    if delta > 0 and tau <= 1:
        raise ValueError("discrepancy principle needs tau > 1")
    thr = tau * delta
    for i, r in enumerate(residuals, start=1):
        if r < thr:
            return i
    return None


def bregman_run(prob, lam, cfg=DEFAULT_CONFIG, tau=None, stop_residual=None,
                max_k=50, record_values=True):
    """Run Bregman iterations; stop at the discrepancy threshold or max_k.

    The threshold is tau*delta when ``tau`` is given (requires tau > 1 for
    noisy data), or the absolute ``stop_residual`` (used to enforce equality
    constraints on noise-free data); with neither, all max_k steps run.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    threshold = None
    strict = True
    if tau is not None:
        if prob.delta > 0 and tau <= 1:
            raise ValueError("tau must exceed 1 when delta > 0")
        threshold = tau * prob.delta
    elif stop_residual is not None:
        # absolute equality tolerance: non-strict so a zero threshold can
        # still fire on exactly attained data
        threshold = float(stop_residual)
        strict = False

    grid = prob.grid
    f = prob.f_delta.values
    zeta = np.zeros_like(f)
    xi = np.zeros_like(f)
    states = []
    warm = None
    stop_index = None

    for k in range(1, max_k + 1):
        shifted = prob.with_data(Field(grid, f + zeta))
        res = solve_tikhonov(shifted, lam, cfg, warm=warm)
        warm = res.state
        ax = prob.op.apply_array(res.u.values + res.v.values)
        residual = float(np.linalg.norm(ax - f))
        zeta += f - ax
        xi = xi - lam * prob.op.adjoint_array(ax - f)

        state = BregmanState(k=k, u=res.u, v=res.v, xi=Field(grid, xi),
                             residual=residual)
        if record_values:
            state.g_value = value(prob.g, res.u, cfg) if prob.g else 0.0
            state.h_value = value(prob.h, res.v, cfg) if prob.h else 0.0
            state.objective = (0.5 * lam * residual ** 2
                               + state.g_value + state.h_value)
        states.append(state)

        if threshold is not None and (residual < threshold
                                      or (not strict and residual <= threshold)):
            stop_index = k
            break

    return BregmanRun(states=states, stop_index=stop_index, threshold=threshold)


def run_to_discrepancy(prob, lam, tau, cfg=DEFAULT_CONFIG, max_k=200,
                       record_values=False):
    """Bregman iterations that must reach the discrepancy threshold."""
    run = bregman_run(prob, lam, cfg, tau=tau, max_k=max_k,
                      record_values=record_values)
    if not run.stopped:
        raise NonConverged(
            f"Bregman loop did not reach residual < {run.threshold:.6g} "
            f"within {max_k} steps", iterations=max_k)
    return run
