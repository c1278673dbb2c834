"""Solver configuration shared by the inner and outer loops."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the inner primal-dual solver and the multiplier bisection.

    Step sizes are tied by tau = sigma = 1/||K|| with the operator norm
    overestimated by a 1.05 safety factor, so tau*sigma*||K||^2 <= 1 holds.
    """

    max_inner_iters: int = 5000
    rel_tol: float = 1e-6
    check_every: int = 50
    bisection_margin: float = 1e-3
    bisection_max_steps: int = 60
    lambda_floor: float = 1e-8
    lambda_ceil: float = 1e12
    seed: int = 0
    power_iters: int = 50
    # inner minimizations used only to *evaluate* TGV-type functionals
    eval_rel_tol: float = 1e-9
    eval_max_iters: int = 40000

    def __post_init__(self):
        if self.max_inner_iters <= 0 or self.rel_tol <= 0 or self.check_every <= 0:
            raise ValueError("solver config entries must be positive")
        if self.bisection_margin <= 0 or self.bisection_max_steps <= 0:
            raise ValueError("bisection config entries must be positive")
        if not (0 < self.lambda_floor < self.lambda_ceil):
            raise ValueError("lambda bracket limits must satisfy 0 < floor < ceil")

    def eval_config(self):
        """Config used for regularizer value computations."""
        return replace(self, max_inner_iters=self.eval_max_iters,
                       rel_tol=self.eval_rel_tol)


DEFAULT_CONFIG = SolverConfig()
