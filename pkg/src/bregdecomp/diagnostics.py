"""Quality metrics and the correlation-based stopping rule.

The normalized cross-correlation of two signals (or images) collects the
inner products of one signal against all periodic shifts of the other,
normalized by the product of their norms; the scalar correlation is the
squared 2-norm of that lag map divided by the number of nodes.  Decomposition
runs are stopped at the first interior local minimum of the scalar
correlation along the outer iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG
from .errors import DegenerateReference, ZeroSignal
from .fields import Field


@dataclass
class CorrelationMap:
    """Lag-indexed normalized cross-correlation.

    1D values have length 2N-1 with lags -(N-1)..N-1; 2D values are
    (2R-1) x (2C-1).  Under the periodic extension, lags that differ by a
    full period carry equal values.
    """

    values: np.ndarray
    norm_uv: float

    def at_lag(self, *lag):
        shape = self.values.shape
        idx = tuple(k + (n - 1) // 2 for k, n in zip(lag, shape))
        return float(self.values[idx])


def _circular_correlation(u, v):
    # c[k] = sum_i u[i] * v[i + k] with periodic v, for k = 0..N-1 per axis
    if u.ndim == 1:
        U = np.fft.rfft(u)
        V = np.fft.rfft(v)
        return np.fft.irfft(np.conj(U) * V, n=u.shape[0])
    U = np.fft.rfft2(u)
    V = np.fft.rfft2(v)
    return np.fft.irfft2(np.conj(U) * V, s=u.shape)


def ncc(u: Field, v: Field) -> CorrelationMap:
    """Normalized cross-correlation over the full symmetric lag range."""
    if u.grid != v.grid:
        raise ValueError("signals must share a grid")
    nu = np.linalg.norm(u.values)
    nv = np.linalg.norm(v.values)
    if nu == 0.0 or nv == 0.0:
        raise ZeroSignal("cross-correlation of a zero signal is undefined")
    c = _circular_correlation(u.values, v.values) / (nu * nv)
    if u.grid.ndim == 1:
        n = u.grid.shape[0]
        lags = np.arange(-(n - 1), n) % n
        vals = c[lags]
    else:
        rows, cols = u.grid.shape
        ri = np.arange(-(rows - 1), rows) % rows
        ci = np.arange(-(cols - 1), cols) % cols
        vals = c[np.ix_(ri, ci)]
    return CorrelationMap(values=vals, norm_uv=float(nu * nv))


def scalar_correlation(u: Field, v: Field) -> float:
    """Squared 2-norm of the correlation map over the node count."""
    m = ncc(u, v)
    return float(np.sum(m.values ** 2)) / u.grid.size


def first_local_min(series):
    """1-based index of the first interior local minimum of a series.

    Requires the left neighbor >= value <= right neighbor with strict
    inequality on at least one side; index 1 never fires (a run must not end
    after its first step), plateaus do not fire, and windows containing NaN
    are skipped.  Streaming-compatible: the decision for index l only needs
    entries up to l+1.
    """
    s = list(series)
    for i in range(1, len(s) - 1):
        a, b, c = s[i - 1], s[i], s[i + 1]
        if any(x != x for x in (a, b, c)):  # NaN guard
            continue
        if a >= b <= c and (a > b or b < c):
            return i + 1
    return None


PSNR_CAP_DB = 300.0


def psnr(x: Field, reference: Field) -> float:
    """10*log10(peak^2 / MSE) with peak the reference dynamic range, capped
    at 300 dB for an exact match."""
    if x.grid != reference.grid:
        raise ValueError("fields must share a grid")
    peak = float(np.max(reference.values) - np.min(reference.values))
    if peak == 0.0:
        raise DegenerateReference("reference has zero dynamic range")
    mse = float(np.mean((x.values - reference.values) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


@dataclass
class BoundRow:
    l: int
    h_value: float
    bound: float
    ok: bool


def bound_tracker(h_values, h0, g_xbar, slack=1e-3):
    """Per-step comparison of h(v_l) against the bound h(0) + g(xbar)/l."""
    rows = []
    for l, hv in enumerate(h_values, start=1):
        bound = h0 + g_xbar / l
        rows.append(BoundRow(l=l, h_value=float(hv), bound=float(bound),
                             ok=bool(hv <= bound * (1.0 + slack))))
    return rows


def subgradient_certificate(reg, anchor: Field, p: Field, cfg=DEFAULT_CONFIG,
                            n_probes=20, seed=0, eps_scale=1e-4,
                            probe_scale=None):
    """Check the subgradient inequality base(x') >= base(anchor) +
    <p, x' - anchor> - eps at seeded random probes.

    Returns (ok, worst_margin) where worst_margin is the most negative slack
    seen (>= -eps passes).  The regularizer's tilt, if any, is ignored: p is
    tested against the base functional.
    """
    from dataclasses import replace

    from .regularizers import value

    base = replace(reg, tilt=None)
    rng = np.random.Generator(np.random.Philox(seed))
    v_anchor = value(base, anchor, cfg)
    if probe_scale is None:
        spread = float(np.max(anchor.values) - np.min(anchor.values))
        probe_scale = 0.5 * (1.0 + spread)
    worst = np.inf
    ok = True
    for _ in range(n_probes):
        x = Field(anchor.grid,
                  anchor.values + probe_scale * rng.standard_normal(anchor.grid.shape))
        v_x = value(base, x, cfg)
        gain = float(np.sum(p.values * (x.values - anchor.values)))
        eps = eps_scale * (1.0 + abs(v_x) + abs(v_anchor))
        margin = v_x - v_anchor - gain
        worst = min(worst, margin)
        if margin < -eps:
            ok = False
    return ok, worst
