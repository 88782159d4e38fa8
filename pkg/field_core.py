"""
Periodic-box discretization, spectral and physical field carriers, derivatives,
dealiased products, Lebesgue norms and snapshot serialization.

Array layout used everywhere: component axes first, then optional batch axes
(a Timeline keeps its time axis here), then the ``dim`` spatial axes. Fourier
multipliers have shape ``(N,) * dim`` and broadcast from the right, so every
operator here works unchanged on stacked time lines.
"""

import logging
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
import scipy.fft as sfft

from suite_errors import DomainError, GridError, GridMismatchError, NonFiniteFieldError

logger = logging.getLogger(__name__)

CSV_MAX_POINTS = 2 ** 16
CSV_FLOAT_FORMAT = "%.12e"


def fft_workers():
    """Worker count handed to scipy.fft (BOUSSINESQ_FFT_WORKERS, default 1)."""
    try:
        return max(1, int(os.getenv("BOUSSINESQ_FFT_WORKERS", "1")))
    except ValueError:
        return 1


# ------------------------
# Grid
# ------------------------

@dataclass(frozen=True)
class Grid:
    """Cubic periodic box [0, L)^d sampled with N points per axis."""

    dim: int
    n_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        n = self.n_per_axis
        if not isinstance(n, (int, np.integer)) or n < 8 or (n & (n - 1)) != 0:
            raise GridError(f"n_per_axis must be a power of two >= 8, got {n}")
        if not np.isfinite(self.box_length) or self.box_length <= 0:
            raise GridError(f"box_length must be positive, got {self.box_length}")

    @property
    def shape(self):
        return (self.n_per_axis,) * self.dim

    @property
    def n_points(self):
        return self.n_per_axis ** self.dim

    @property
    def spacing(self):
        return self.box_length / self.n_per_axis

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def volume(self):
        return self.box_length ** self.dim

    @property
    def spatial_axes(self):
        return tuple(range(-self.dim, 0))

    @cached_property
    def mode_indices(self):
        """Integer mode numbers m in FFT order, shape (d, N, ..., N)."""
        m = np.fft.fftfreq(self.n_per_axis, d=1.0 / self.n_per_axis)
        grids = np.meshgrid(*([m] * self.dim), indexing="ij")
        out = np.stack(grids)
        out.flags.writeable = False
        return out

    @cached_property
    def wavenumbers(self):
        """Wavevectors 2*pi*m/L, shape (d, N, ..., N)."""
        out = (2.0 * np.pi / self.box_length) * self.mode_indices
        out.flags.writeable = False
        return out

    @cached_property
    def k_odd(self):
        """Wavevectors with the Nyquist plane zeroed, used by odd multipliers."""
        nyquist = self.mode_indices == -(self.n_per_axis // 2)
        out = np.where(nyquist, 0.0, self.wavenumbers)
        out.flags.writeable = False
        return out

    @cached_property
    def k_squared(self):
        out = np.sum(self.wavenumbers ** 2, axis=0)
        out.flags.writeable = False
        return out

    @cached_property
    def k_abs(self):
        out = np.sqrt(self.k_squared)
        out.flags.writeable = False
        return out

    @cached_property
    def dealias_mask(self):
        """2/3 rule: keep |m| < N/3 along every axis."""
        keep = np.all(np.abs(self.mode_indices) < self.n_per_axis / 3.0, axis=0)
        keep.flags.writeable = False
        return keep

    @cached_property
    def zero_mode(self):
        return (0,) * self.dim

    def coordinates(self):
        """Physical lattice coordinates as a tuple of d arrays of shape (N,)*d."""
        x = np.arange(self.n_per_axis) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))


def make_grid(dim, n_per_axis, box_length):
    return Grid(int(dim), int(n_per_axis), float(box_length))


# ------------------------
# Field carriers
# ------------------------

def _readonly(arr):
    view = arr.view()
    view.flags.writeable = False
    return view


def _check_layout(grid, arr, rank, kind):
    if rank not in (0, 1, 2):
        raise DomainError(f"rank must be 0, 1 or 2, got {rank}")
    if arr.ndim < rank + grid.dim:
        raise DomainError(f"{kind} array has {arr.ndim} axes, need at least {rank + grid.dim}")
    if arr.shape[:rank] != (grid.dim,) * rank:
        raise DomainError(f"{kind} component axes {arr.shape[:rank]} do not match dim {grid.dim}")
    if arr.shape[arr.ndim - grid.dim:] != grid.shape:
        raise GridMismatchError(f"{kind} spatial shape {arr.shape[-grid.dim:]} does not match grid {grid.shape}")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients with the mean convention: coefficient 0 is the spatial mean."""

    grid: Grid
    coeffs: np.ndarray
    rank: int = 0

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        _check_layout(self.grid, arr, self.rank, "SpectralField")
        object.__setattr__(self, "coeffs", _readonly(arr))

    @property
    def components(self):
        return self.grid.dim ** self.rank

    @property
    def batch_shape(self):
        return self.coeffs.shape[self.rank:self.coeffs.ndim - self.grid.dim]

    def with_coeffs(self, coeffs, rank=None):
        return SpectralField(self.grid, coeffs, self.rank if rank is None else rank)

    def component(self, *index):
        """Select component(s); the result drops one rank per index."""
        return SpectralField(self.grid, self.coeffs[index], self.rank - len(index))

    def __add__(self, other):
        _same_grid(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_grid(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def is_finite(self):
        return bool(np.all(np.isfinite(self.coeffs)))


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real samples on the grid lattice."""

    grid: Grid
    values: np.ndarray
    rank: int = 0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        _check_layout(self.grid, arr, self.rank, "PhysicalField")
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def components(self):
        return self.grid.dim ** self.rank

    @property
    def batch_shape(self):
        return self.values.shape[self.rank:self.values.ndim - self.grid.dim]


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


def zeros(grid, rank=0, batch_shape=()):
    return SpectralField(grid, np.zeros((grid.dim,) * rank + tuple(batch_shape) + grid.shape, np.complex128), rank)


def ensure_finite(field, name="field"):
    data = field.coeffs if isinstance(field, SpectralField) else field.values
    if not np.all(np.isfinite(data)):
        raise NonFiniteFieldError(f"{name} contains non-finite values")
    return field


# ------------------------
# Transforms
# ------------------------

def _forward(values, grid):
    return sfft.fftn(values, axes=grid.spatial_axes, workers=fft_workers()) / grid.n_points


def _inverse(coeffs, grid):
    return sfft.ifftn(coeffs * grid.n_points, axes=grid.spatial_axes, workers=fft_workers()).real


def to_spectral(field):
    if not np.all(np.isfinite(field.values)):
        raise NonFiniteFieldError("to_spectral received non-finite samples")
    return SpectralField(field.grid, _forward(field.values, field.grid), field.rank)


def to_physical(field):
    return PhysicalField(field.grid, _inverse(field.coeffs, field.grid), field.rank)


def from_function(grid, fn):
    """Sample fn(x1, ..., xd) on the lattice; a list/tuple result becomes a vector field."""
    values = fn(*grid.coordinates())
    if isinstance(values, (list, tuple)):
        values = np.stack([np.broadcast_to(v, grid.shape) for v in values])
    values = np.asarray(values, dtype=np.float64)
    if values.ndim < grid.dim:
        values = np.broadcast_to(values, grid.shape)
    rank = values.ndim - grid.dim
    return PhysicalField(grid, np.array(values), rank)


def spectral_from_function(grid, fn):
    return to_spectral(from_function(grid, fn))


# ------------------------
# Differential operators
# ------------------------

def derivative(field, axis):
    grid = field.grid
    if not 0 <= axis < grid.dim:
        raise DomainError(f"axis {axis} outside 0..{grid.dim - 1}")
    return field.with_coeffs(1j * grid.k_odd[axis] * field.coeffs)


def gradient(field):
    """Gradient as a new trailing component axis: (grad u)[i, j] = d_j u_i."""
    if field.rank > 1:
        raise DomainError("gradient of a matrix field is not supported")
    grid = field.grid
    parts = [1j * grid.k_odd[j] * field.coeffs for j in range(grid.dim)]
    return SpectralField(grid, np.stack(parts, axis=field.rank), field.rank + 1)


def divergence(field):
    """Contract the last component axis with the gradient: (div A)_i = sum_j d_j A_ij."""
    if field.rank == 0:
        raise DomainError("divergence needs a vector or matrix field")
    grid = field.grid
    last = field.rank - 1
    out = sum(1j * grid.k_odd[j] * np.take(field.coeffs, j, axis=last) for j in range(grid.dim))
    return SpectralField(grid, out, field.rank - 1)


def laplacian(field):
    return field.with_coeffs(-field.grid.k_squared * field.coeffs)


def symmetric_gradient(u):
    """M = grad u + (grad u)^T for a vector field u."""
    g = gradient(u).coeffs
    return SpectralField(u.grid, g + np.swapaxes(g, 0, 1), 2)


def dealias(field):
    return field.with_coeffs(field.coeffs * field.grid.dealias_mask)


def horizontal_part(u):
    """u^h as a vector field: the last (vertical) component set to zero."""
    if u.rank != 1:
        raise DomainError("horizontal_part needs a vector field")
    coeffs = np.array(u.coeffs)
    coeffs[-1] = 0.0
    return u.with_coeffs(coeffs)


def vertical_part(u):
    """u^d, the last component, as a scalar field."""
    if u.rank != 1:
        raise DomainError("vertical_part needs a vector field")
    return u.component(u.grid.dim - 1)


def resample(field, n_per_axis):
    """Same box, new resolution: zero-pad or truncate the coefficients (Nyquist modes dropped)."""
    grid = field.grid
    target = make_grid(grid.dim, n_per_axis, grid.box_length)
    half = min(grid.n_per_axis, n_per_axis) // 2
    modes = list(range(0, half)) + list(range(-half + 1, 0))
    old = np.ix_(*[[m % grid.n_per_axis for m in modes]] * grid.dim)
    new = np.ix_(*[[m % n_per_axis for m in modes]] * grid.dim)
    out = np.zeros(field.coeffs.shape[:field.coeffs.ndim - grid.dim] + target.shape, np.complex128)
    out[(Ellipsis,) + new] = field.coeffs[(Ellipsis,) + old]
    return SpectralField(target, out, field.rank)


# ------------------------
# Products
# ------------------------

def _out_rank(subscripts):
    out = subscripts.split("->")[1]
    return len(out.replace("...", ""))


def multiply(a, b, contraction=None):
    """
    Dealiased pointwise product.

    Without ``contraction`` one factor must be a scalar or both must share a
    rank (componentwise product). ``contraction`` is an einsum string over the
    component axes with ``...`` standing for batch and spatial axes, e.g.
    ``"i...,ij...->j..."`` for (u . grad) v written as u_i d_i v_j.
    """
    _same_grid(a, b)
    grid = a.grid
    pa = _inverse(a.coeffs * grid.dealias_mask, grid)
    pb = _inverse(b.coeffs * grid.dealias_mask, grid)
    if contraction is not None:
        values = np.einsum(contraction, pa, pb)
        rank = _out_rank(contraction)
    elif a.rank == 0 or b.rank == 0 or a.rank == b.rank:
        values = pa * pb
        rank = max(a.rank, b.rank)
    else:
        raise DomainError(f"multiply of rank {a.rank} and rank {b.rank} needs a contraction")
    return SpectralField(grid, _forward(values, grid) * grid.dealias_mask, rank)


def multiply_physical(values, field):
    """Product of raw physical samples (not truncated) with a field; output dealiased."""
    grid = field.grid
    prod = np.asarray(values) * _inverse(field.coeffs, grid)
    return SpectralField(grid, _forward(prod, grid) * grid.dealias_mask, field.rank)


# ------------------------
# Norms
# ------------------------

def pointwise_magnitude(values, rank):
    if rank == 0:
        return np.abs(values)
    return np.sqrt(np.sum(values ** 2, axis=tuple(range(rank))))


def lp_norm(field, p):
    """
    L^p norm over the box; vector fields use the Euclidean magnitude and
    matrix fields the Frobenius magnitude. Batch axes are kept.
    """
    if p < 1:
        raise DomainError(f"lp_norm needs p >= 1, got {p}")
    if isinstance(field, SpectralField):
        field = to_physical(field)
    grid = field.grid
    mag = pointwise_magnitude(field.values, field.rank)
    if np.isinf(p):
        out = np.max(mag, axis=grid.spatial_axes)
    elif p == 2:
        out = np.sqrt(np.sum(mag * mag, axis=grid.spatial_axes) * grid.cell_volume)
    else:
        out = (np.sum(mag ** p, axis=grid.spatial_axes) * grid.cell_volume) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def spectral_l2_norm(field):
    """L^2 norm from coefficients through Parseval; no transform needed."""
    grid = field.grid
    axes = tuple(range(field.rank)) + grid.spatial_axes
    out = np.sqrt(grid.volume * np.sum(np.abs(field.coeffs) ** 2, axis=axes))
    return float(out) if np.ndim(out) == 0 else out


# ------------------------
# Random band-limited fields
# ------------------------

def random_band_limited(grid, rng, rank=0, band=4, amplitude=1.0, batch_shape=(), mean_zero=True):
    """
    Random real field supported on modes with |m| <= band. The result is
    scaled so its root-mean-square over the whole array equals ``amplitude``.
    """
    shape = (grid.dim,) * rank + tuple(batch_shape) + grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    support = np.sqrt(np.sum(grid.mode_indices ** 2, axis=0)) <= band
    if mean_zero:
        support = support & (grid.k_squared > 0)
    values = _inverse(raw * support, grid)
    rms = np.sqrt(np.mean(values ** 2))
    if rms > 0:
        values = values * (amplitude / rms)
    return SpectralField(grid, _forward(values, grid), rank)


# ------------------------
# Serialization
# ------------------------

def _rank_from_components(grid, components):
    for rank in (0, 1, 2):
        if grid.dim ** rank == components:
            return rank
    raise DomainError(f"component count {components} does not fit dim {grid.dim}")


def save_field(path, field):
    """Flat binary snapshot: int64 dim, int64 N, float64 L, int64 components, then float64 samples."""
    if isinstance(field, SpectralField):
        field = to_physical(field)
    if field.batch_shape:
        raise DomainError("only single snapshots can be saved; select a node first")
    grid = field.grid
    header = (np.array([grid.dim, grid.n_per_axis], dtype="<i8").tobytes()
              + np.array([grid.box_length], dtype="<f8").tobytes()
              + np.array([field.components], dtype="<i8").tobytes())
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    logger.debug("wrote snapshot %s (%d components)", path, field.components)


def load_field(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    dim, n = np.frombuffer(blob[:16], dtype="<i8")
    (length,) = np.frombuffer(blob[16:24], dtype="<f8")
    (components,) = np.frombuffer(blob[24:32], dtype="<i8")
    grid = make_grid(int(dim), int(n), float(length))
    rank = _rank_from_components(grid, int(components))
    values = np.frombuffer(blob[32:], dtype="<f8").reshape((grid.dim,) * rank + grid.shape)
    return PhysicalField(grid, values.copy(), rank)


def field_to_csv(path, field):
    if isinstance(field, SpectralField):
        field = to_physical(field)
    grid = field.grid
    if grid.n_points > CSV_MAX_POINTS:
        raise DomainError(f"CSV export limited to {CSV_MAX_POINTS} grid points, grid has {grid.n_points}")
    if field.batch_shape:
        raise DomainError("only single snapshots can be exported")
    columns = {f"x{i + 1}": c.ravel() for i, c in enumerate(grid.coordinates())}
    flat = field.values.reshape((field.components,) + grid.shape)
    for c in range(field.components):
        columns[f"v{c}"] = flat[c].ravel()
    pd.DataFrame(columns).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
