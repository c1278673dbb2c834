"""Grids, sampled fields, discrete differential operators and forward operators.

Conventions, fixed once for the whole package:

* grid spacing is 1, all functionals are plain sums over nodes;
* gradients use forward differences with a Neumann boundary: the missing
  last difference along each axis is stored as 0 so that every channel
  shares the grid shape;
* divergence and symmetrized divergence are the exact negative adjoints of
  the corresponding gradients (adjointness is enforced by tests to 1e-10);
* the Gaussian blur is a periodic convolution with a truncated, renormalized
  kernel, so constants pass through it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """A regular 1D or 2D grid with unit spacing."""

    shape: tuple

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got shape {shape}")
        if any(n < 2 for n in shape):
            raise ValueError(f"each grid dimension needs at least 2 nodes, got {shape}")

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def sym_channels(self):
        d = self.ndim
        return d * (d + 1) // 2


def _as_float_array(values, shape, what):
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{what} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Field:
    """Scalar values sampled on a grid. Treated as immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", _as_float_array(self.values, self.grid.shape, "Field.values")
        )

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(Grid(values.shape), values)

    def norm(self):
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class VectorField:
    """One value per gradient channel per node: d channels on a d-dim grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        shape = (self.grid.ndim,) + self.grid.shape
        object.__setattr__(
            self, "values", _as_float_array(self.values, shape, "VectorField.values")
        )


@dataclass(frozen=True)
class TensorField:
    """Symmetric d x d matrix per node, stored as d(d+1)/2 unique entries.

    2D channel order is (11, 22, 12); the inner product doubles the
    off-diagonal channel so it matches the Frobenius pairing of the full
    matrices.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        shape = (self.grid.sym_channels,) + self.grid.shape
        object.__setattr__(
            self, "values", _as_float_array(self.values, shape, "TensorField.values")
        )


def inner(a, b):
    """Inner product of two like-typed fields (Frobenius for tensors)."""
    if type(a) is not type(b) or a.grid != b.grid:
        raise ValueError("inner product needs two fields of the same type and grid")
    if isinstance(a, TensorField) and a.grid.ndim == 2:
        w = np.array([1.0, 1.0, 2.0]).reshape((3,) + (1,) * a.grid.ndim)
        return float(np.sum(w * a.values * b.values))
    return float(np.sum(a.values * b.values))


# ---------------------------------------------------------------------------
# difference operators (array level)
# ---------------------------------------------------------------------------

def forward_diff(arr, axis):
    """Forward difference along one axis, last slot zero (Neumann)."""
    out = np.zeros_like(arr)
    sl_lo = [slice(None)] * arr.ndim
    sl_hi = [slice(None)] * arr.ndim
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    out[tuple(sl_lo)] = arr[tuple(sl_hi)] - arr[tuple(sl_lo)]
    return out


def forward_diff_adjoint(arr, axis):
    """Exact transpose of :func:`forward_diff` (equals minus a divergence)."""
    out = np.zeros_like(arr)
    sl_lo = [slice(None)] * arr.ndim
    sl_hi = [slice(None)] * arr.ndim
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    a = arr[tuple(sl_lo)]
    out[tuple(sl_hi)] += a
    out[tuple(sl_lo)] -= a
    return out


def grad_array(arr):
    """Stacked forward differences, shape (d, *grid)."""
    return np.stack([forward_diff(arr, axis) for axis in range(arr.ndim)])


def grad_adjoint_array(vec):
    """Transpose of :func:`grad_array`; the divergence is its negative."""
    out = np.zeros(vec.shape[1:], dtype=vec.dtype)
    for axis in range(vec.shape[0]):
        out += forward_diff_adjoint(vec[axis], axis)
    return out


def grad_valid_mask(shape):
    """True where a forward difference actually exists (False at the
    zero-padded last slot of each axis)."""
    d = len(shape)
    mask = np.ones((d,) + tuple(shape), dtype=bool)
    for axis in range(d):
        sl = [slice(None)] * (d + 1)
        sl[0] = axis
        sl[1 + axis] = slice(shape[axis] - 1, shape[axis])
        mask[tuple(sl)] = False
    return mask


def sym_grad_array(vec):
    """Symmetrized forward-difference gradient of a vector field.

    Output channels follow the TensorField convention, with the off-diagonal
    channel scaled by sqrt(2) internally *not* here: this returns the plain
    (11, 22, 12) entries.
    """
    d = vec.shape[0]
    if d == 1:
        return forward_diff(vec[0], 0)[None]
    e11 = forward_diff(vec[0], 0)
    e22 = forward_diff(vec[1], 1)
    e12 = 0.5 * (forward_diff(vec[1], 0) + forward_diff(vec[0], 1))
    return np.stack([e11, e22, e12])


def sym_grad_adjoint_array(tens):
    """Adjoint of :func:`sym_grad_array` w.r.t. the Frobenius pairing
    (off-diagonal channel counted twice); the symmetrized divergence is its
    negative."""
    if tens.shape[0] == 1:
        return forward_diff_adjoint(tens[0], 0)[None]
    out = np.zeros((2,) + tens.shape[1:], dtype=tens.dtype)
    out[0] += forward_diff_adjoint(tens[0], 0)
    out[1] += forward_diff_adjoint(tens[1], 1)
    # factor 2 from the pairing cancels the 1/2 in the symmetrization
    out[1] += forward_diff_adjoint(tens[2], 0)
    out[0] += forward_diff_adjoint(tens[2], 1)
    return out


def sym_valid_mask(shape):
    """Validity of each symmetrized-gradient channel (strict: the mixed
    channel needs both contributing differences in range)."""
    d = len(shape)
    if d == 1:
        m = np.ones((1,) + tuple(shape), dtype=bool)
        m[0, -1] = False
        return m
    rows, cols = shape
    m = np.ones((3, rows, cols), dtype=bool)
    m[0, rows - 1, :] = False
    m[1, :, cols - 1] = False
    m[2, rows - 1, :] = False
    m[2, :, cols - 1] = False
    return m


# ---------------------------------------------------------------------------
# field-level wrappers
# ---------------------------------------------------------------------------

def gradient_fd(u: Field) -> VectorField:
    """Forward-difference gradient; boundary slot of each channel is 0."""
    return VectorField(u.grid, grad_array(u.values))


def divergence_fd(w: VectorField) -> Field:
    """Negative adjoint of :func:`gradient_fd`, summed over channels."""
    return Field(w.grid, -grad_adjoint_array(w.values))


def sym_gradient(w: VectorField) -> TensorField:
    return TensorField(w.grid, sym_grad_array(w.values))


def sym_divergence(m: TensorField) -> VectorField:
    return VectorField(m.grid, -sym_grad_adjoint_array(m.values))


# ---------------------------------------------------------------------------
# forward operators
# ---------------------------------------------------------------------------

class Identity:
    """The identity forward operator."""

    name = "identity"

    def apply_array(self, arr):
        return arr

    def adjoint_array(self, arr):
        return arr

    # absolute-coefficient versions, used for solver preconditioning
    abs_apply_array = apply_array
    abs_adjoint_array = adjoint_array

    def apply(self, u: Field) -> Field:
        return Field(u.grid, u.values.copy())

    def adjoint(self, y: Field) -> Field:
        return Field(y.grid, y.values.copy())

    def describe(self):
        return "identity"


class PeriodicGaussianBlur:
    """Periodic convolution with a truncated, renormalized Gaussian kernel.

    The kernel is sampled at integer offsets in [-radius, radius], truncated
    there (radius defaults to ceil(4*std), < 1e-4 of mass lost) and rescaled
    to sum exactly 1, so the blur preserves the mean of a field.
    """

    name = "gaussian_blur"

    def __init__(self, std=1.0, truncation_radius=None):
        if std <= 0:
            raise ValueError("blur std must be positive")
        self.std = float(std)
        if truncation_radius is None:
            truncation_radius = int(np.ceil(4.0 * std))
        self.truncation_radius = int(truncation_radius)
        if self.truncation_radius < 1:
            raise ValueError("truncation radius must be at least 1")
        offsets = np.arange(-self.truncation_radius, self.truncation_radius + 1)
        kernel = np.exp(-0.5 * (offsets / self.std) ** 2)
        self.kernel = kernel / kernel.sum()

    def apply_array(self, arr):
        out = arr
        for axis in range(arr.ndim):
            out = convolve1d(out, self.kernel, axis=axis, mode="wrap")
        return out

    def adjoint_array(self, arr):
        # adjoint of periodic convolution = periodic correlation
        out = arr
        for axis in range(arr.ndim):
            out = convolve1d(out, self.kernel[::-1], axis=axis, mode="wrap")
        return out

    # the kernel is nonnegative, so |K| row/column sums reuse the same maps
    abs_apply_array = apply_array
    abs_adjoint_array = adjoint_array

    def apply(self, u: Field) -> Field:
        if min(u.grid.shape) < len(self.kernel):
            raise ValueError("grid smaller than the blur kernel")
        return Field(u.grid, self.apply_array(u.values))

    def adjoint(self, y: Field) -> Field:
        return Field(y.grid, self.adjoint_array(y.values))

    def describe(self):
        return f"gaussian_blur(std={self.std:g},radius={self.truncation_radius})"


def make_operator(name, blur_std=1.0, truncation_radius=None):
    if name == "identity":
        return Identity()
    if name == "gaussian_blur":
        return PeriodicGaussianBlur(blur_std, truncation_radius)
    raise ValueError(f"unknown forward operator {name!r}")


# ---------------------------------------------------------------------------
# operator norm estimation
# ---------------------------------------------------------------------------

def _power_iteration(apply_fn, adjoint_fn, start, iters):
    v = start / max(np.linalg.norm(start), 1e-300)
    lam = 0.0
    for _ in range(iters):
        w = adjoint_fn(apply_fn(v))
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return np.sqrt(lam)


def operator_norm_estimate(apply_fn, adjoint_fn, domain_shape, iters=50, seed=0,
                           safety=1.05):
    """Upper estimate of the spectral norm of a linear map.

    Runs at least 50 power iterations on a seeded random start and multiplies
    by a 1.05 safety factor; deterministic for a fixed seed.
    """
    iters = max(int(iters), 50)
    rng = np.random.Generator(np.random.Philox(seed))
    start = rng.standard_normal(domain_shape)
    return safety * _power_iteration(apply_fn, adjoint_fn, start, iters)
