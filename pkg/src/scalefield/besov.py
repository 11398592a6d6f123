"""Littlewood-Paley blocks, Besov/Sobolev norms, paraproducts, commutator.

Block symbols are built telescopically from a single quintic low-pass
profile, chi_j(xi) = chi(|xi| / 2^(j+1)), so the partition of unity
chi + sum_j phi_j = 1 holds at every grid mode up to roundoff; an explicit
pointwise renormalization then pins it at machine precision.  Paraproducts
are assembled in value space on the grid's padded transform, which makes the
Bony trichotomy an exact identity for band-limited fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import (GridError, SpectralField, TorusGrid, product_values,
                       values_to_coeffs)
from .symbols import step_down

__all__ = ["BlockPartition", "lp_block", "besov_norm", "sobolev_norm",
           "paraproduct", "commutator"]

_CHI_PLATEAU = 0.9
_CHI_SUPPORT = 1.2


def _chi_profile(r):
    return step_down(r, _CHI_PLATEAU, _CHI_SUPPORT)


@dataclass(frozen=True)
class BlockPartition:
    """Dyadic block symbols phi_j, j = -1..j_max, on one mode cube."""

    band: int
    j_max: int
    symbols: np.ndarray        # shape (j_max + 2,) + cube, index j + 1
    cumulative: np.ndarray     # S_m = sum_{j <= m} phi_j, same indexing

    def symbol(self, j: int) -> np.ndarray:
        if j < -1 or j > self.j_max:
            raise GridError(f"block index {j} outside -1..{self.j_max}")
        return self.symbols[j + 1]

    def low_pass(self, m: int) -> np.ndarray:
        """S_m = chi + phi_0 + ... + phi_m (S_{-2} = 0)."""
        if m < -2 or m > self.j_max:
            raise GridError(f"cumulative index {m} outside -2..{self.j_max}")
        if m == -2:
            return np.zeros_like(self.cumulative[0])
        return self.cumulative[m + 1]


@lru_cache(maxsize=None)
def _partition(dim: int, band: int) -> BlockPartition:
    from .spectral import _mode_norms
    r = _mode_norms(dim, band)
    rmax = float(r.max())
    # smallest J with chi(r / 2^(J+1)) = 1 on the whole cube
    j_max = 0
    while _CHI_PLATEAU * 2 ** (j_max + 1) < rmax:
        j_max += 1
    lows = [_chi_profile(r / 2 ** (j + 1)) for j in range(-1, j_max + 1)]
    lows[-1] = np.ones_like(r)  # exact saturation at the top block
    symbols = [lows[0]]
    for j in range(0, j_max + 1):
        symbols.append(lows[j + 1] - lows[j])
    symbols = np.stack(symbols)
    total = symbols.sum(axis=0)
    symbols /= total  # pointwise renormalization; total is 1 up to roundoff
    return BlockPartition(band=band, j_max=j_max, symbols=symbols,
                          cumulative=np.cumsum(symbols, axis=0))


def block_partition(grid: TorusGrid, band: int | None = None) -> BlockPartition:
    band = grid.mode_cutoff if band is None else band
    return _partition(grid.dim, band)


def lp_block(j: int, f: SpectralField) -> SpectralField:
    """Spectral restriction Delta_j f."""
    part = block_partition(f.grid, f.band)
    if j > part.j_max:
        raise GridError(f"block {j} empty on this grid (j_max = {part.j_max})")
    return SpectralField(f.grid, f.coeffs * part.symbol(j), f.real, f.aliased)


def _grid_lp_norm(f: SpectralField, p: float) -> float:
    """L^p norm under the normalized measure, quadrature on the physical grid."""
    if p == 2.0:
        return f.l2_norm()
    size = max(f.grid.modes_per_axis, 2 * f.band + 1)
    v = np.abs(f.values(size))
    if np.isinf(p):
        return float(v.max())
    return float(np.mean(v ** p) ** (1.0 / p))


def besov_norm(f: SpectralField, s: float, p: float, q: float) -> float:
    """|| (2^{js} ||Delta_j f||_{L^p})_j ||_{l^q}."""
    part = block_partition(f.grid, f.band)
    terms = np.array([2.0 ** (j * s) * _grid_lp_norm(lp_block(j, f), p)
                      for j in range(-1, part.j_max + 1)])
    if np.isinf(q):
        return float(terms.max())
    return float((terms ** q).sum() ** (1.0 / q))


def sobolev_norm(f: SpectralField, s: float, p: float) -> float:
    """|| <D>^s f ||_{L^p} on the physical grid."""
    jn = f.grid.japanese_norms(f.band)
    g = SpectralField(f.grid, f.coeffs * jn ** s, f.real, f.aliased)
    return _grid_lp_norm(g, p)


_MODES = ("less", "greater", "resonant")


def paraproduct(f: SpectralField, g: SpectralField, mode: str) -> SpectralField:
    """Bony piece of the product fg.

    greater: sum over j < i - 1 of Delta_i f Delta_j g (f carries the high
    frequencies); less is the mirror; resonant sums |i - j| <= 1.  The three
    pieces add up to the full dealiased product exactly.
    """
    if mode not in _MODES:
        raise GridError(f"paraproduct mode must be one of {_MODES}")
    if f.grid != g.grid:
        raise GridError("fields live on different grids")
    if mode == "less":
        return paraproduct(g, f, "greater")
    grid = f.grid
    out_band = f.band + g.band
    size = grid.product_size
    if size < 2 * out_band + 1:
        raise GridError("padding budget too small for an exact paraproduct")
    pf = block_partition(grid, f.band)
    pg = block_partition(grid, g.band)
    acc = np.zeros((size,) * grid.dim)
    if mode == "greater":
        for i in range(1, pf.j_max + 1):
            low = min(i - 2, pg.j_max)
            df = SpectralField(grid, f.coeffs * pf.symbol(i), f.real)
            sg = SpectralField(grid, g.coeffs * pg.low_pass(low), g.real)
            acc += product_values((df, sg), size)
    else:  # resonant
        for i in range(-1, pf.j_max + 1):
            lo, hi = max(i - 1, -1), min(i + 1, pg.j_max)
            if lo > pg.j_max:
                continue
            near = pg.low_pass(hi) - pg.low_pass(lo - 1)
            df = SpectralField(grid, f.coeffs * pf.symbol(i), f.real)
            ng = SpectralField(grid, g.coeffs * near, g.real)
            acc += product_values((df, ng), size)
    coeffs = values_to_coeffs(acc, out_band, grid.dim)
    return SpectralField(grid, coeffs, f.real and g.real, f.aliased or g.aliased)


def commutator(f: SpectralField, g: SpectralField, h: SpectralField) -> SpectralField:
    """(f > g) o h - g (f o h), trilinear diagnostic field."""
    from .spectral import multiply_fields
    left = paraproduct(paraproduct(f, g, "greater"), h, "resonant")
    right = multiply_fields(g, paraproduct(f, h, "resonant"))
    return left - right
