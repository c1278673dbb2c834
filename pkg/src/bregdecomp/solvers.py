"""Joint two-component Tikhonov solves and the constrained (Morozov) variant.

``solve_tikhonov`` minimizes

    lambda/2 * ||A(u + v) - f||^2 + g(u) + h(v)

over both components, with any Bregman tilts carried inside the regularizers.
``solve_morozov`` wraps it in a bisection over the multiplier lambda until
the residual matches the noise level delta within a 0.1% margin (or detects
the interior case where the unconstrained minimizer is already feasible).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import BracketFailure, Infeasible, NonConverged
from .fields import Field, Grid
from .regularizers import build_reg_atoms, extended_grad
from .splitting import Atom, LinMap, QuadPenalty, SplitStructure, pdhg


@dataclass(frozen=True)
class DecompositionProblem:
    """Forward operator, observation, noise level and the two penalties.

    Either regularizer may be None, which pins that component to zero
    (single-component problems, used for classic denoising and in tests).
    """

    op: object
    f_delta: Field
    delta: float
    g: object | None
    h: object | None

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("noise level must be nonnegative")
        if self.g is None and self.h is None:
            raise ValueError("at least one regularizer is required")

    @property
    def grid(self) -> Grid:
        return self.f_delta.grid

    def with_data(self, f_delta: Field, delta=None):
        return DecompositionProblem(self.op, f_delta,
                                    self.delta if delta is None else delta,
                                    self.g, self.h)

    def with_regularizers(self, g, h):
        return DecompositionProblem(self.op, self.f_delta, self.delta, g, h)


@dataclass
class SolveResult:
    u: Field
    v: Field
    residual: float
    lam: float
    inner_iters: int
    converged: bool
    objective: float
    interior: bool = False
    state: object = None           # warm-start payload (last iterate + duals)
    objective_trace: list = None

    def x(self) -> Field:
        return Field(self.u.grid, self.u.values + self.v.values)


def _build_structure(prob, lam):
    grid = prob.grid
    sp = grid.shape
    shapes = []
    u_idx = v_idx = aux_g = aux_h = None
    if prob.g is not None:
        u_idx = len(shapes)
        shapes.append(sp)
    if prob.h is not None:
        v_idx = len(shapes)
        shapes.append(sp)
    if prob.g is not None and prob.g.needs_aux:
        aux_g = len(shapes)
        shapes.append((grid.ndim,) + sp)
    if prob.h is not None and prob.h.needs_aux:
        aux_h = len(shapes)
        shapes.append((grid.ndim,) + sp)

    active = [i for i in (u_idx, v_idx) if i is not None]
    atoms = [Atom(LinMap(1, sp, [("op_sum", None, (prob.op, active))]),
                  QuadPenalty(lam, target=prob.f_delta.values[None]),
                  is_data=True)]
    tilts = [None] * len(shapes)
    sig_g = sig_h = "-"
    if prob.g is not None:
        bg = build_reg_atoms(prob.g, grid, u_idx, 1.0, None, aux_g)
        atoms += bg.atoms
        if bg.tilt is not None:
            tilts[u_idx] = bg.tilt
        sig_g = prob.g.signature()
    if prob.h is not None:
        bh = build_reg_atoms(prob.h, grid, v_idx, 1.0, None, aux_h)
        atoms += bh.atoms
        if bh.tilt is not None:
            tilts[v_idx] = (bh.tilt if tilts[v_idx] is None
                            else tilts[v_idx] + bh.tilt)
        sig_h = prob.h.signature()

    norm_key = f"tik|{prob.op.describe()}|{sp}|g={sig_g}|h={sig_h}"
    structure = SplitStructure(block_shapes=shapes, atoms=atoms, tilts=tilts,
                               norm_key=norm_key)
    return structure, (u_idx, v_idx, aux_g, aux_h)


def solve_tikhonov(prob, lam, cfg=DEFAULT_CONFIG, warm=None):
    """Minimize lambda/2 ||A(u+v) - f||^2 + g(u) + h(v).

    ``warm`` accepts the ``state`` of a previous SolveResult on the same
    problem structure.  Deterministic for fixed inputs and cfg.seed.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    structure, (u_idx, v_idx, aux_g, aux_h) = _build_structure(prob, lam)

    x0 = y0 = None
    if warm is not None:
        blocks, duals = warm
        if ([b.shape for b in blocks] == structure.block_shapes
                and len(duals) == len(structure.atoms)):
            x0, y0 = blocks, duals
    if x0 is None:
        x0 = [np.zeros(s) for s in structure.block_shapes]
        for reg, var, aux in ((prob.g, u_idx, aux_g), (prob.h, v_idx, aux_h)):
            if aux is not None:
                x0[aux] = extended_grad(x0[var])

    out = pdhg(structure, cfg, x0=x0, y0=y0)

    # When both penalties ignore constants, the split of the image mean
    # between the components is a degenerate direction (shifting (u, v) by
    # (c, -c) changes nothing).  Pin it by moving the background (median) of
    # the second component to zero; the incumbent and the warm-start state
    # are shifted consistently so follow-up solves stay on the same sheet.
    if (prob.g is not None and prob.h is not None
            and prob.g.constant_invariant and prob.h.constant_invariant):
        for blocks in (out.blocks, out.last_blocks):
            c = float(np.median(blocks[v_idx]))
            blocks[v_idx] = blocks[v_idx] - c
            blocks[u_idx] = blocks[u_idx] + c

    grid = prob.grid
    zero = np.zeros(grid.shape)
    u = Field(grid, out.blocks[u_idx] if u_idx is not None else zero)
    v = Field(grid, out.blocks[v_idx] if v_idx is not None else zero)
    return SolveResult(
        u=u, v=v,
        residual=out.data_residual,
        lam=lam,
        inner_iters=out.iterations,
        converged=out.converged,
        objective=out.objective,
        state=(out.last_blocks, out.last_duals),
        objective_trace=out.objective_trace,
    )


def solve_morozov(prob, cfg=DEFAULT_CONFIG, lambda_hint=None, warm=None):
    """Minimize g(u) + h(v) subject to ||A(u+v) - f|| <= delta.

    Realized as a bisection over the Lagrange multiplier of the equivalent
    Tikhonov problem: the returned residual r satisfies |r - delta| <=
    margin*delta, or r < delta with the multiplier at the bracket floor
    (interior case, flagged on the result).
    """
    delta = prob.delta
    if delta <= 0:
        raise ValueError("Morozov solve needs delta > 0")
    margin = cfg.bisection_margin
    lo_band = delta * (1.0 - margin)
    hi_band = delta * (1.0 + margin)

    def solve(lam, w):
        return solve_tikhonov(prob, lam, cfg, warm=w)

    # a hint from a neighboring solve allows a tighter expansion factor
    grow = 10.0 if lambda_hint is None else 2.0
    lam = float(np.clip(lambda_hint if lambda_hint else 1.0,
                        cfg.lambda_floor, cfg.lambda_ceil))
    res = solve(lam, warm)
    if lo_band <= res.residual <= hi_band:
        return res

    if res.residual > delta:
        # bracket upward: residual decreases with lambda
        lam_lo, r_lo = lam, res.residual
        lam_hi = r_hi = None
        while lam < cfg.lambda_ceil:
            lam = min(lam * grow, cfg.lambda_ceil)
            res = solve(lam, res.state)
            if lo_band <= res.residual <= hi_band:
                return res
            if res.residual <= delta:
                lam_hi, r_hi = lam, res.residual
                break
            lam_lo, r_lo = lam, res.residual
        if lam_hi is None:
            raise Infeasible(
                f"residual {res.residual:.6g} stays above delta*(1+margin)="
                f"{hi_band:.6g} at lambda={cfg.lambda_ceil:g}")
    else:
        # bracket downward; may hit the interior case
        lam_hi, r_hi = lam, res.residual
        lam_lo = r_lo = None
        while lam > cfg.lambda_floor:
            lam = max(lam / grow, cfg.lambda_floor)
            res = solve(lam, res.state)
            if lo_band <= res.residual <= hi_band:
                return res
            if res.residual >= delta:
                lam_lo, r_lo = lam, res.residual
                break
            lam_hi, r_hi = lam, res.residual
        if lam_lo is None:
            # unconstrained-ish minimizer already satisfies the constraint
            res.interior = res.residual < lo_band
            return res

    slack = 1e-6 + 0.05 * delta
    for _ in range(cfg.bisection_max_steps):
        lam_mid = float(np.sqrt(lam_lo * lam_hi))
        res = solve(lam_mid, res.state)
        if res.residual > r_lo + slack or res.residual < r_hi - slack:
            raise BracketFailure(
                f"residual {res.residual:.6g} outside bracket "
                f"[{r_hi:.6g}, {r_lo:.6g}] at lambda={lam_mid:g}")
        if lo_band <= res.residual <= hi_band:
            return res
        if res.residual > delta:
            lam_lo, r_lo = lam_mid, res.residual
        else:
            lam_hi, r_hi = lam_mid, res.residual
    raise NonConverged(
        f"bisection did not reach |r - delta| <= {margin:g}*delta in "
        f"{cfg.bisection_max_steps} steps",
        gap=abs(res.residual - delta))
