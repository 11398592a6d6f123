"""Torus grid, spectral field container, transforms, and dealiased products.

Conventions used throughout the package: the box is (R/2piZ)^d carrying the
unit-normalized Haar measure, and a real field is represented by its Fourier
coefficients on an integer mode cube,

    f(x) = sum_{|n_i| <= band} fhat(n) exp(i<n, x>).

With this normalization ``int f dx = fhat(0)`` and
``||f||_L2^2 = sum_n |fhat(n)|^2``.  Nonlinear operations go through point
values on a padded grid large enough that every coefficient kept afterwards
is exact; the padded size is budgeted by ``TorusGrid.padding_factor``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridError",
    "TorusGrid",
    "SpectralField",
    "forward_transform",
    "inverse_transform",
    "multiply_fields",
    "apply_multiplier",
]


class GridError(ValueError):
    """Raised for grid mismatches, bad shapes, or insufficient padding."""


def _fft_axis_indices(band: int, size: int) -> np.ndarray:
    """Positions of modes -band..band along one FFT-ordered axis of length size."""
    if size < 2 * band + 1:
        raise GridError(f"FFT size {size} cannot hold modes up to +-{band}")
    return np.arange(-band, band + 1) % size


@dataclass(frozen=True)
class TorusGrid:
    """Discretization of the d-torus: retained mode cube plus transform sizes.

    mode_cutoff N bounds the retained modes (|n_i| <= N), modes_per_axis M is
    the physical evaluation grid (M >= 2N+1, nodes x_j = 2pi j / M), and
    padding_factor sets the budget for alias-free products.
    """

    dim: int = 3
    modes_per_axis: int = 0
    mode_cutoff: int = 0
    padding_factor: int = 4

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        if self.mode_cutoff < 1:
            raise GridError("mode_cutoff must be >= 1")
        if self.modes_per_axis == 0:
            object.__setattr__(self, "modes_per_axis", 2 * self.mode_cutoff + 1)
        if self.modes_per_axis < 2 * self.mode_cutoff + 1:
            raise GridError(
                f"modes_per_axis {self.modes_per_axis} < 2*mode_cutoff+1 "
                f"= {2 * self.mode_cutoff + 1}"
            )
        if self.padding_factor < 1:
            raise GridError("padding_factor must be >= 1")

    # -- cached geometry ---------------------------------------------------

    @property
    def product_size(self) -> int:
        """Padded FFT size used for dealiased products."""
        return sfft.next_fast_len(self.padding_factor * (2 * self.mode_cutoff + 1))

    def cube_shape(self, band: int | None = None) -> tuple[int, ...]:
        band = self.mode_cutoff if band is None else band
        return (2 * band + 1,) * self.dim

    def modes(self, band: int | None = None) -> np.ndarray:
        """Integer mode coordinates, shape (dim,) + cube_shape(band)."""
        band = self.mode_cutoff if band is None else band
        return _mode_coords(self.dim, band)

    def mode_norms(self, band: int | None = None) -> np.ndarray:
        """|n| on the mode cube."""
        band = self.mode_cutoff if band is None else band
        return _mode_norms(self.dim, band)

    def japanese_norms(self, band: int | None = None) -> np.ndarray:
        """<n> = sqrt(1 + |n|^2) on the mode cube."""
        band = self.mode_cutoff if band is None else band
        return np.sqrt(1.0 + _mode_norms(self.dim, band) ** 2)

    def nodes_1d(self, size: int | None = None) -> np.ndarray:
        size = self.modes_per_axis if size is None else size
        return 2.0 * np.pi * np.arange(size) / size

    def orbit_index(self) -> "OrbitIndex":
        return _orbit_index(self.dim, self.mode_cutoff)

    def n_modes(self, band: int | None = None) -> int:
        band = self.mode_cutoff if band is None else band
        return (2 * band + 1) ** self.dim


@lru_cache(maxsize=None)
def _mode_coords(dim: int, band: int) -> np.ndarray:
    ax = np.arange(-band, band + 1)
    grids = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(grids)


@lru_cache(maxsize=None)
def _mode_norms(dim: int, band: int) -> np.ndarray:
    coords = _mode_coords(dim, band)
    return np.sqrt((coords.astype(np.float64) ** 2).sum(axis=0))


@dataclass(frozen=True)
class OrbitIndex:
    """Flat indexing of the mode cube into {0} and +-n orbit pairs.

    rep/conj are flat indices of orbit representatives and their mirrors;
    orbit_of_mode maps every flat cube index to an orbit id (0 = zero mode).
    """

    zero: int
    rep: np.ndarray
    conj: np.ndarray
    orbit_of_mode: np.ndarray
    n_orbits: int


@lru_cache(maxsize=None)
def _orbit_index(dim: int, band: int) -> OrbitIndex:
    coords = _mode_coords(dim, band).reshape(dim, -1)
    n = coords.shape[1]
    side = 2 * band + 1
    # lexicographically positive representative of each +-n pair
    keys = coords[0].copy()
    for a in range(1, dim):
        keys = keys * (2 * side) + coords[a]
    rep_mask = keys > 0
    rep = np.nonzero(rep_mask)[0]
    # mirror index of flat position: reverse every axis
    mirrored = (-coords + band)  # coordinates of -n shifted to 0..2B
    strides = np.array([side ** (dim - 1 - a) for a in range(dim)])
    conj = (mirrored * strides[:, None]).sum(axis=0)[rep]
    zero = int(np.nonzero(keys == 0)[0][0])
    orbit = np.zeros(n, dtype=np.int64)
    ids = np.arange(1, rep.size + 1)
    orbit[rep] = ids
    orbit[conj] = ids
    return OrbitIndex(zero=zero, rep=rep, conj=conj, orbit_of_mode=orbit,
                      n_orbits=rep.size + 1)


class SpectralField:
    """Complex Fourier coefficients of a (usually real) field on the torus.

    ``coeffs`` is a dense cube indexed by mode n at position n + band along
    each axis.  ``band`` may exceed the grid's retained cutoff: products and
    Wick powers of retained fields naturally live on wider cubes.  Fields are
    treated as immutable; operations return new instances.
    """

    __slots__ = ("grid", "coeffs", "band", "real", "aliased")

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray, real: bool = True,
                 aliased: bool = False):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        side = coeffs.shape[0]
        if coeffs.shape != (side,) * grid.dim or side % 2 == 0:
            raise GridError(f"coefficient cube has bad shape {coeffs.shape}")
        self.grid = grid
        self.coeffs = coeffs
        self.band = (side - 1) // 2
        self.real = real
        self.aliased = aliased

    # -- constructors --------------------------------------------------------

    @classmethod
    def zeros(cls, grid: TorusGrid, band: int | None = None) -> "SpectralField":
        band = grid.mode_cutoff if band is None else band
        return cls(grid, np.zeros(grid.cube_shape(band), dtype=np.complex128))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float,
                 band: int | None = None) -> "SpectralField":
        f = cls.zeros(grid, band)
        f.coeffs[(f.band,) * grid.dim] = value
        return f

    @classmethod
    def from_mode_dict(cls, grid: TorusGrid, entries: dict,
                       band: int | None = None) -> "SpectralField":
        """Build a real field from {mode tuple: coefficient}; mirrors are added."""
        band = grid.mode_cutoff if band is None else band
        f = cls.zeros(grid, band)
        for n, v in entries.items():
            idx = tuple(c + band for c in n)
            f.coeffs[idx] += v
            if any(n):
                midx = tuple(-c + band for c in n)
                f.coeffs[midx] += np.conj(v)
        return f

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.real, self.aliased)

    # -- accessors -------------------------------------------------------------

    def coeff(self, n) -> complex:
        idx = tuple(int(c) + self.band for c in n)
        return complex(self.coeffs[idx])

    def integral(self) -> float:
        """int f dx under the normalized measure (= zero-mode coefficient)."""
        z = self.coeffs[(self.band,) * self.grid.dim]
        return float(z.real) if self.real else z

    def l2_norm(self) -> float:
        return float(np.sqrt((np.abs(self.coeffs) ** 2).sum()))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        rev = self.coeffs[(slice(None, None, -1),) * self.grid.dim]
        scale = max(np.abs(self.coeffs).max(), 1e-300)
        return bool(np.abs(rev.conj() - self.coeffs).max() <= tol * scale)

    def values(self, size: int | None = None) -> np.ndarray:
        """Point values on a size^dim grid (exact for size >= 2*band+1)."""
        size = max(self.grid.modes_per_axis, 2 * self.band + 1) if size is None else size
        arr = embed_coeffs(self.coeffs, self.band, size, self.grid.dim)
        vals = sfft.ifftn(arr, workers=-1) * size ** self.grid.dim
        return vals.real if self.real else vals

    # -- linear arithmetic -------------------------------------------------------

    def _aligned(self, other: "SpectralField") -> tuple[np.ndarray, np.ndarray, int]:
        if self.grid is not other.grid and self.grid != other.grid:
            raise GridError("fields live on different grids")
        b = max(self.band, other.band)
        return (_pad_cube(self.coeffs, self.band, b, self.grid.dim),
                _pad_cube(other.coeffs, other.band, b, self.grid.dim), b)

    def __add__(self, other):
        a, b, _ = self._aligned(other)
        return SpectralField(self.grid, a + b, self.real and other.real,
                             self.aliased or other.aliased)

    def __sub__(self, other):
        a, b, _ = self._aligned(other)
        return SpectralField(self.grid, a - b, self.real and other.real,
                             self.aliased or other.aliased)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar,
                             self.real and not isinstance(scalar, complex),
                             self.aliased)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs, self.real, self.aliased)

    def truncate(self, band: int) -> "SpectralField":
        """Galerkin truncation (or zero-padding) to the given band."""
        if band == self.band:
            return self
        if band > self.band:
            return SpectralField(self.grid, _pad_cube(self.coeffs, self.band, band,
                                                      self.grid.dim),
                                 self.real, self.aliased)
        s = slice(self.band - band, self.band + band + 1)
        return SpectralField(self.grid, self.coeffs[(s,) * self.grid.dim].copy(),
                             self.real, self.aliased)


def _pad_cube(coeffs: np.ndarray, band: int, new_band: int, dim: int) -> np.ndarray:
    if new_band == band:
        return coeffs
    out = np.zeros((2 * new_band + 1,) * dim, dtype=np.complex128)
    s = slice(new_band - band, new_band + band + 1)
    out[(s,) * dim] = coeffs
    return out


def embed_coeffs(coeffs: np.ndarray, band: int, size: int, dim: int) -> np.ndarray:
    """Place a centered mode cube into an FFT-ordered array of the given size."""
    idx = _fft_axis_indices(band, size)
    out = np.zeros((size,) * dim, dtype=np.complex128)
    out[np.ix_(*([idx] * dim))] = coeffs
    return out


def extract_coeffs(arr: np.ndarray, band: int, dim: int) -> np.ndarray:
    """Read the centered mode cube back out of an FFT-ordered array."""
    idx = _fft_axis_indices(band, arr.shape[0])
    return arr[np.ix_(*([idx] * dim))]


def values_to_coeffs(values: np.ndarray, band: int, dim: int) -> np.ndarray:
    size = values.shape[0]
    arr = sfft.fftn(values, workers=-1) / size ** dim
    return extract_coeffs(arr, band, dim)


# -- spec operations ----------------------------------------------------------


def forward_transform(grid: TorusGrid, values: np.ndarray) -> SpectralField:
    """Real grid values -> SpectralField on the retained mode cube.

    Round-trips with inverse_transform to machine precision for band-limited
    input (anything produced by inverse_transform qualifies).
    """
    if values.shape != (grid.modes_per_axis,) * grid.dim:
        raise GridError(f"value array shape {values.shape} does not match grid")
    coeffs = values_to_coeffs(np.asarray(values, dtype=np.float64),
                              grid.mode_cutoff, grid.dim)
    return SpectralField(grid, coeffs)


def inverse_transform(f: SpectralField) -> np.ndarray:
    """SpectralField -> real values on the grid's physical nodes."""
    if f.band > (f.grid.modes_per_axis - 1) // 2:
        raise GridError("field band exceeds what the physical grid can represent")
    return f.values(f.grid.modes_per_axis)


def apply_multiplier(symbol, f: SpectralField, real_even: bool = True) -> SpectralField:
    """Fourier multiplier g(D): coefficients scaled pointwise by symbol(modes).

    ``symbol`` is either a callable receiving the (dim,)+cube integer mode
    array, or a precomputed array matching the coefficient cube.
    """
    if callable(symbol):
        mult = np.asarray(symbol(f.grid.modes(f.band)), dtype=np.float64)
    else:
        mult = np.asarray(symbol)
    if mult.shape != f.coeffs.shape:
        raise GridError(f"multiplier shape {mult.shape} does not match field cube "
                        f"{f.coeffs.shape}")
    if not np.all(np.isfinite(mult)):
        raise GridError("multiplier is not finite at all grid modes")
    return SpectralField(f.grid, f.coeffs * mult, f.real and real_even, f.aliased)


def multiply_fields(*fields: SpectralField, dealias: bool = True,
                    out_band: int | None = None) -> SpectralField:
    """Pointwise product of fields, returned as coefficients up to out_band.

    With dealias on, the product is evaluated on the grid's padded transform
    (size padding_factor*(2*mode_cutoff+1)); every returned coefficient is
    then exact provided the padding budget covers the factor count.  The
    aliased fast mode evaluates on the bare physical grid instead and labels
    the result.
    """
    if not fields:
        raise GridError("multiply_fields needs at least one field")
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridError("fields live on different grids")
    full_band = sum(f.band for f in fields)
    if dealias:
        size = grid.product_size
        band = full_band if out_band is None else min(out_band, full_band)
        if size < full_band + band + 1:
            raise GridError(
                f"padding_factor {grid.padding_factor} insufficient for a dealiased "
                f"product of {len(fields)} factors (needs padded size >= "
                f"{full_band + band + 1}, budget {size})")
        aliased = False
    else:
        size = grid.modes_per_axis
        band = min((size - 1) // 2, full_band if out_band is None else out_band)
        aliased = full_band > (size - 1) // 2
    vals = fields[0].values(size)
    for f in fields[1:]:
        vals = vals * f.values(size)
    coeffs = values_to_coeffs(vals, band, grid.dim)
    real = all(f.real for f in fields)
    return SpectralField(grid, coeffs, real, aliased or any(f.aliased for f in fields))


def product_values(fields, size: int) -> np.ndarray:
    """Pointwise product values on an explicit transform size (internal hot path)."""
    vals = fields[0].values(size)
    for f in fields[1:]:
        vals = vals * f.values(size)
    return vals
