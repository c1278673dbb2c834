"""Synthetic data generators for the three benchmark decompositions.

All randomness goes through the counter-based Philox generator keyed by a
64-bit seed, so ground truths and noise realizations are bitwise
reproducible across platforms.  The stored noise level delta is always the
2-norm of the realized noise vector, not the nominal standard deviation.

Generators:

* ``gen_exp1`` -- 1D: one sine period plus sparse signed spikes, identity
  forward operator (peaks-from-smooth separation, H1 vs L1 penalties);
* ``gen_exp2`` -- 2D: a smooth bump plus the indicator of a centered square,
  observed through a periodic Gaussian blur (smooth vs piecewise-constant,
  H1 vs isotropic TV);
* ``gen_exp3`` -- 2D: a 3x3 block image with an affine central block and an
  oscillating pattern on the outer blocks (piecewise-affine vs oscillatory,
  TGV vs oscillation-TGV).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, Identity, PeriodicGaussianBlur

NOISE_SEED_OFFSET = 1_000_003  # generators draw noise from seed + this offset


@dataclass(frozen=True)
class GroundTruth:
    u_true: Field
    v_true: Field
    x_true: Field
    f_clean: Field
    f_delta: Field
    delta: float
    op: object


def add_gaussian_noise(f: Field, std, seed):
    """Add i.i.d. Gaussian noise from a Philox stream; returns the noisy
    field and the exact 2-norm of the realized perturbation."""
    if std < 0:
        raise ValueError("noise std must be nonnegative")
    if std == 0:
        return Field(f.grid, f.values.copy()), 0.0
    rng = np.random.Generator(np.random.Philox(int(seed)))
    noise = std * rng.standard_normal(f.grid.shape)
    return Field(f.grid, f.values + noise), float(np.linalg.norm(noise))


def _finish(u, v, op, noise_std, seed):
    u_f = Field.from_array(u)
    v_f = Field.from_array(v)
    x_f = Field.from_array(u + v)
    f_clean = op.apply(x_f)
    f_delta, delta = add_gaussian_noise(f_clean, noise_std,
                                        seed + NOISE_SEED_OFFSET)
    return GroundTruth(u_true=u_f, v_true=v_f, x_true=x_f, f_clean=f_clean,
                       f_delta=f_delta, delta=delta, op=op)


def gen_exp1(n=300, seed=0, noise_std=0.05, n_spikes=7):
    """One sine period on n nodes plus sparse spikes at seeded positions.

    Spike amplitudes are drawn in [0.5, 1.5] with random signs.
    """
    if n < 16:
        raise ValueError("need at least 16 nodes")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    i = np.arange(n)
    u = np.sin(2.0 * np.pi * i / (n - 1))
    v = np.zeros(n)
    pos = rng.choice(n, size=n_spikes, replace=False)
    amp = rng.uniform(0.5, 1.5, size=n_spikes)
    sign = rng.choice([-1.0, 1.0], size=n_spikes)
    v[pos] = amp * sign
    return _finish(u, v, Identity(), noise_std, seed)


def gen_exp2(side=96, seed=0, noise_std=0.05, blur_std=1.0, bump_height=0.75):
    """Smooth bump plus the indicator of a centered square, observed through
    a periodic Gaussian blur.

    The bump is a product of half-period sines scaled to [0, bump_height];
    the square has side side//3 and height 1.
    """
    if side < 32:
        raise ValueError("need at least a 32x32 image")
    i = np.arange(side)
    s = np.sin(np.pi * i / (side - 1))
    u = bump_height * np.outer(s, s)
    v = np.zeros((side, side))
    s3 = side // 3
    start = (side - s3) // 2
    v[start:start + s3, start:start + s3] = 1.0
    return _finish(u, v, PeriodicGaussianBlur(std=blur_std), noise_std, seed)


def gen_exp3(subsquare=25, seed=0, noise_std=0.05, omega=(0.25, 0.5)):
    """3x3 block image: affine central block vs oscillating outer blocks.

    Block-local pixel coordinates start at 0.  The central block of the
    first component is the plane (z1 + z2) / (2 * subsquare); the outer
    blocks of the second component carry cos(omega.z) + sin(omega.z).
    """
    if subsquare < 16:
        raise ValueError("need blocks of at least 16x16 pixels")
    s = subsquare
    side = 3 * s
    u = np.zeros((side, side))
    zi, zj = np.meshgrid(np.arange(s, dtype=float), np.arange(s, dtype=float),
                         indexing="ij")
    u[s:2 * s, s:2 * s] = (zi + zj) / (2.0 * s)
    phase = omega[0] * zi + omega[1] * zj
    osc = np.cos(phase) + np.sin(phase)
    v = np.tile(osc, (3, 3))
    v[s:2 * s, s:2 * s] = 0.0
    return _finish(u, v, Identity(), noise_std, seed)
