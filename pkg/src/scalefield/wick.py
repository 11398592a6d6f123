"""Hermite-renormalized powers, their combinatorial multiples, and the
quartic energy with counterterms.

Wick constants are always computed from the truncated mode set actually
simulated, so centering identities hold exactly in law.  Powers are evaluated
pointwise on a padded grid and projected once, which keeps binomial
expansions of shifted arguments exact identities at the coefficient level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, TorusGrid, values_to_coeffs
from .symbols import DEFAULT_PARAMS, SymbolParams, rho_grid, theta_grid

__all__ = ["WickContext", "wick_power", "bold_W2", "bold_W3", "smoothed_wick",
           "potential_V", "default_counterterms", "hermite_coefficients"]


@dataclass
class WickContext:
    """Per-scale pointwise variances of the regularized field on one grid.

    c(t)       = sum_n rho_t(n)^2 / <n>^2     (Var W_t(x))
    c_smooth(t)= sum_n rho_t(n)^2 / <n>^3     (Var <D>^{-1/2} W_t(x))
    c_theta(T) = sum_n theta_T(n)^2 / <n>^2   (Var theta_T W_infty(x))
    c_theta_t(T, t) = sum_n theta_T(n)^2 rho_t(n)^2 / <n>^2
    """

    grid: TorusGrid
    params: SymbolParams = DEFAULT_PARAMS
    _cache: dict = field(default_factory=dict, repr=False)

    def _sums(self, t: float) -> tuple[float, float]:
        key = ("c", t)
        if key not in self._cache:
            jn = self.grid.japanese_norms()
            r2 = rho_grid(t, jn, self.params) ** 2
            self._cache[key] = (float((r2 / jn ** 2).sum()),
                                float((r2 / jn ** 3).sum()))
        return self._cache[key]

    def c(self, t: float) -> float:
        return self._sums(t)[0]

    def c_smooth(self, t: float) -> float:
        return self._sums(t)[1]

    def c_theta(self, T: float) -> float:
        key = ("ct", T)
        if key not in self._cache:
            jn = self.grid.japanese_norms()
            th = theta_grid(T, self.grid.mode_norms(), self.params)
            self._cache[key] = float((th ** 2 / jn ** 2).sum())
        return self._cache[key]

    def c_theta_t(self, T: float, t: float) -> float:
        key = ("ctt", T, t)
        if key not in self._cache:
            jn = self.grid.japanese_norms()
            th = theta_grid(T, self.grid.mode_norms(), self.params)
            r2 = rho_grid(t, jn, self.params) ** 2
            self._cache[key] = float((th ** 2 * r2 / jn ** 2).sum())
        return self._cache[key]


def hermite_coefficients(m: int, c: float) -> np.ndarray:
    """Monomial coefficients (ascending) of the variance-c Hermite polynomial.

    He_{k+1}(x) = x He_k(x) - k c He_{k-1}(x); He_0 = 1, He_1 = x.
    """
    prev = np.array([1.0])
    if m == 0:
        return prev
    cur = np.array([0.0, 1.0])
    for k in range(1, m):
        nxt = np.zeros(k + 2)
        nxt[1:] = cur
        nxt[:k] -= k * c * prev
        prev, cur = cur, nxt
    return cur


def _polyval_ascending(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, coeffs[-1])
    for a in coeffs[-2::-1]:
        out = out * x + a
    return out


def _pointwise_poly(f: SpectralField, coeffs: np.ndarray,
                    out_band: int | None = None,
                    size: int | None = None) -> SpectralField:
    """Polynomial of f evaluated in value space, projected once.

    Exactness of the returned band needs size >= deg*band + out_band + 1;
    the default uses the grid's padding budget and the full polynomial band.
    """
    grid = f.grid
    deg = len(coeffs) - 1
    full = deg * f.band if deg > 0 else 0
    band = full if out_band is None else min(out_band, full)
    band = max(band, 0)
    size = grid.product_size if size is None else size
    need = full + band + 1
    if size < need:
        from .spectral import GridError
        raise GridError(
            f"padding budget {size} too small for a degree-{deg} power with "
            f"output band {band} (needs {need})")
    vals = _polyval_ascending(coeffs, f.values(size))
    return SpectralField(grid, values_to_coeffs(vals, band, grid.dim), f.real)


def wick_power(f: SpectralField, m: int, c: float,
               out_band: int | None = None) -> SpectralField:
    """Hermite form of f^m with pointwise variance c.

    m=1: f; m=2: f^2 - c; m=3: f^3 - 3cf; m=4: f^4 - 6cf^2 + 3c^2.
    """
    if m not in (1, 2, 3, 4):
        raise ValueError(f"wick_power supports m in 1..4, got {m}")
    if c < 0.0:
        raise ValueError("variance must be nonnegative")
    if m == 1:
        return f if out_band is None else f.truncate(out_band)
    return _pointwise_poly(f, hermite_coefficients(m, c), out_band)


def bold_W2(f: SpectralField, c: float,
            out_band: int | None = None) -> SpectralField:
    """12 x quadratic Wick power (the drift's quadratic block)."""
    return 12.0 * wick_power(f, 2, c, out_band)


def bold_W3(f: SpectralField, c: float,
            out_band: int | None = None) -> SpectralField:
    """4 x cubic Wick power (the drift's cubic block)."""
    return 4.0 * wick_power(f, 3, c, out_band)


def smoothed_wick(f: SpectralField, m: int, t: float, ctx: WickContext,
                  out_band: int | None = None, allow_even: bool = False,
                  size: int | None = None) -> SpectralField:
    """Hermite power of the half-smoothed field <D>^{-1/2} f at scale t.

    The drift's auxiliary term uses odd m only; even orders are gated behind
    allow_even for experiments.
    """
    if m % 2 == 0 and not allow_even:
        raise ValueError(f"smoothed power order must be odd, got {m}")
    jn = f.grid.japanese_norms(f.band)
    g = SpectralField(f.grid, f.coeffs / np.sqrt(jn), f.real)
    return _pointwise_poly(g, hermite_coefficients(m, ctx.c_smooth(t)),
                           out_band, size)


def potential_V(f: SpectralField, lam: float, a: float, b: float) -> float:
    """lambda * [int f^4 - a int f^2 + b] under the normalized measure."""
    if lam < 0.0:
        raise ValueError("coupling must be nonnegative")
    if lam == 0.0:
        return 0.0
    size = f.grid.product_size
    if size < 4 * f.band + 1:
        from .spectral import GridError
        raise GridError("padding budget too small for an exact quartic integral")
    quart = float(np.mean(f.values(size) ** 4))
    quad = f.l2_norm() ** 2
    return lam * (quart - a * quad + b)


def default_counterterms(T: float, lam: float, ctx: WickContext,
                         gamma: float = 0.0) -> tuple[float, float]:
    """(a_T, b_T) = (6 c_T + lam*gamma, 3 c_T^2).

    gamma = 0 is pure Wick ordering; the second-order shift is exposed as a
    single knob rather than derived.
    """
    c = ctx.c(T)
    return 6.0 * c + lam * gamma, 3.0 * c * c
