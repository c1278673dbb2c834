"""Figure rendering for run directories (the optional report path).

Reads the delimited outputs (trajectory.csv / bregman.csv / sweep.csv and
FIELD files) and writes PNG figures next to them under ``figures/``.  The
CSV and FIELD files remain the data contract; figures are previews.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .fieldio import read_csv, read_field  # noqa: E402


def _col(header, rows, name, default=np.nan):
    idx = header.index(name)
    out = []
    for row in rows:
        out.append(float(row[idx]) if row[idx] not in ("", None) else default)
    return np.array(out)


def _plot_component(ax, field, title):
    if field.grid.ndim == 1:
        ax.plot(field.values, lw=1.0)
    else:
        ax.imshow(field.values, cmap="gray")
        ax.set_xticks([])
        ax.set_yticks([])
    ax.set_title(title, fontsize=9)


def render_run_figures(run_dir):
    """Render trajectory and component figures; returns written paths."""
    fig_dir = os.path.join(run_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    written = []

    traj_path = os.path.join(run_dir, "trajectory.csv")
    if os.path.exists(traj_path):
        header, rows = read_csv(traj_path)
        if len(rows) > 1:
            ls = _col(header, rows, "l")
            corr = _col(header, rows, "correlation")
            pu = _col(header, rows, "psnr_u")
            pv = _col(header, rows, "psnr_v")
            stop = _col(header, rows, "stop_flag")
            stop_l = ls[stop > 0][0] if np.any(stop > 0) else None

            fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
            ax1.plot(ls, corr, "o-", ms=3)
            ax1.set_xlabel("outer step")
            ax1.set_ylabel("scalar correlation")
            psum = pu + pv
            ax2.plot(ls, psum, "o-", ms=3)
            ax2.set_xlabel("outer step")
            ax2.set_ylabel("PSNR(u) + PSNR(v) [dB]")
            if stop_l is not None:
                for ax in (ax1, ax2):
                    ax.axvline(stop_l, color="r", ls="--", lw=1,
                               label=f"stop l={int(stop_l)}")
                    ax.legend(fontsize=8)
            fig.tight_layout()
            path = os.path.join(fig_dir, "trajectory.png")
            fig.savefig(path, dpi=130)
            plt.close(fig)
            written.append(path)

        bound_path = os.path.join(run_dir, "bound.csv")
        if os.path.exists(bound_path):
            bh, brows = read_csv(bound_path)
            ls = _col(bh, brows, "l")
            hv = _col(bh, brows, "h_value")
            bd = _col(bh, brows, "bound")
            fig, ax = plt.subplots(figsize=(4.8, 3.2))
            ax.semilogy(ls, hv, "o-", ms=3, label="h(v_l)")
            ax.semilogy(ls, bd, "k--", label="h(0) + g(x)/l")
            ax.set_xlabel("outer step")
            ax.legend(fontsize=8)
            fig.tight_layout()
            path = os.path.join(fig_dir, "h_bound.png")
            fig.savefig(path, dpi=130)
            plt.close(fig)
            written.append(path)

    breg_path = os.path.join(run_dir, "bregman.csv")
    if os.path.exists(breg_path):
        header, rows = read_csv(breg_path)
        ks = _col(header, rows, "k")
        res = _col(header, rows, "residual")
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        ax.semilogy(ks, res, "o-", ms=3)
        ax.set_xlabel("Bregman step")
        ax.set_ylabel("residual")
        fig.tight_layout()
        path = os.path.join(fig_dir, "bregman_residual.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    panels = []
    for tag in ("true", "stop", "final"):
        upath = os.path.join(run_dir, f"u_{tag}.field")
        if os.path.exists(upath):
            panels.append((tag, read_field(upath),
                           read_field(os.path.join(run_dir, f"v_{tag}.field"))))
    if panels:
        fig, axes = plt.subplots(len(panels), 2,
                                 figsize=(7, 2.6 * len(panels)),
                                 squeeze=False)
        for row, (tag, u, v) in enumerate(panels):
            _plot_component(axes[row][0], u, f"u ({tag})")
            _plot_component(axes[row][1], v, f"v ({tag})")
        fig.tight_layout()
        path = os.path.join(fig_dir, "components.png")
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written


def render_sweep_figures(run_dir):
    fig_dir = os.path.join(run_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    header, rows = read_csv(os.path.join(run_dir, "sweep.csv"))
    al = _col(header, rows, "alpha")
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for ax, name in zip(axes.ravel(), ("psnr_u", "psnr_v", "psnr_x", "psnr_sum")):
        ax.semilogx(al, _col(header, rows, name), "-", lw=1.2)
        ax.set_xlabel("alpha")
        ax.set_ylabel(f"{name} [dB]")
    fig.tight_layout()
    path = os.path.join(fig_dir, "sweep.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]
