"""Quartic statistics of the low-pass field: the functional separating the
free field from the drift measure, its normalized forms, the mixed cubic
cross term whose mean grows with the cutoff, and scan/trend helpers.

Almost-sure limits are out of reach at desk scale; scans estimate moments on
a grid of terminal scales and summarize growth or decay as fitted log-log
slopes with confidence intervals, or as rank tests for monotonicity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import stats

from .drift import DriftRun, _ValueSpace
from .paths import FieldPath, NoisePath, geometry
from .spectral import SpectralField, TorusGrid
from .symbols import DEFAULT_PARAMS, theta_grid
from .wick import WickContext

__all__ = ["quartic_wick_integral", "s_statistic", "divergence_statistic",
           "cross_term", "ito_representation_check", "ScanResult",
           "fit_log_slope", "consecutive_decrease_pvalues"]


def _value_space(grid: TorusGrid) -> _ValueSpace:
    return _ValueSpace(grid.dim, sfft.next_fast_len(6 * grid.mode_cutoff + 2))


def quartic_wick_integral(f: SpectralField, T: float, ctx: WickContext,
                          c_override: float | None = None) -> float:
    """int [[ (theta_T f)^4 ]] dx, Wick-ordered at the low-pass variance.

    The variance defaults to the free-field value sum theta_T^2 / <n>^2 on
    the retained modes; c_override substitutes it (used by scaling tests).
    """
    grid = f.grid
    theta = theta_grid(T, grid.mode_norms(f.band), ctx.params)
    g = f.coeffs * theta
    c = ctx.c_theta(T) if c_override is None else c_override
    vs = _value_space(grid)
    if f.band > grid.mode_cutoff:
        vs = _ValueSpace(grid.dim, sfft.next_fast_len(4 * f.band + 2))
    v = vs.values(g, f.band)
    m2 = float((np.abs(g) ** 2).sum())
    m4 = float((v ** 4).mean())
    return m4 - 6.0 * c * m2 + 3.0 * c * c


def s_statistic(f: SpectralField, T: float, delta: float,
                ctx: WickContext) -> float:
    """Free-field normalization: quartic integral / T^{(1+delta)/2}."""
    _check_delta(delta)
    return quartic_wick_integral(f, T, ctx) / T ** (0.5 * (1.0 + delta))


def divergence_statistic(f: SpectralField, T: float, delta: float,
                         ctx: WickContext) -> float:
    """Drift-measure normalization: quartic integral / T^(1-delta)."""
    _check_delta(delta)
    return quartic_wick_integral(f, T, ctx) / T ** (1.0 - delta)


def _check_delta(delta: float):
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")


def cross_term(path, T: float, ctx: WickContext) -> float:
    """Knot quadrature of int <theta_T J_t [4 [[ (theta_T W_t)^3 ]]],
    J_t [4 [[ W_t^3 ]]]> dt along one path.

    path may be a free FieldPath or a DriftRun (its drift-measure sample W
    is used).  Wick variances follow the free field at each knot.
    """
    if isinstance(path, DriftRun):
        path = path.W
    grid, sched = path.grid, path.schedule
    geo = geometry(grid, sched, ctx.params)
    theta = theta_grid(T, grid.mode_norms(), ctx.params)
    vs = _value_space(grid)
    N = grid.mode_cutoff
    acc = 0.0
    for k in range(sched.n_intervals):
        t = sched.knots[k]
        if t > T or not geo.active[k]:
            continue
        wk = path.snapshots[k]
        v = vs.values(wk, N)
        vt = vs.values(theta * wk, N)
        c = ctx.c(t)
        ct = ctx.c_theta_t(T, t)
        cube = vs.coeffs(v ** 3 - 3.0 * c * v, N)
        cube_t = vs.coeffs(vt ** 3 - 3.0 * ct * vt, N)
        a_cube = 4.0 * theta * geo.weight[k] * cube_t
        b_cube = 4.0 * geo.weight[k] * cube
        acc += float((a_cube * b_cube.conj()).real.sum()) * sched.dt[k]
    return acc


def ito_representation_check(noise: NoisePath, T: float,
                             ctx: WickContext) -> float:
    """|quartic Wick integral - its discrete stochastic-integral form|.

    The low-pass quartic at the terminal scale telescopes into increments
    4 [[ (theta_T W)^3 ]] d(theta_T W); with exact variance transport the
    defect is the left-endpoint quadrature error, RMS of order sqrt(dt).
    """
    grid, sched = noise.grid, noise.schedule
    if sched.T < T:
        raise ValueError("schedule must resolve [0, T]")
    geo = geometry(grid, sched, ctx.params)
    theta = theta_grid(T, grid.mode_norms(), ctx.params)
    vs = _value_space(grid)
    N = grid.mode_cutoff
    v = np.zeros((vs.size,) * grid.dim)
    w_cube = np.zeros(grid.cube_shape(), dtype=np.complex128)
    s_acc = 0.0
    for k in range(sched.n_intervals):
        t = sched.knots[k]
        ct = ctx.c_theta_t(T, t)
        inc = theta * geo.weight[k] * noise.increments[k]
        dv = vs.values(inc, N)
        s_acc += float((4.0 * (v ** 3 - 3.0 * ct * v) * dv).mean())
        v = v + dv
        w_cube = w_cube + inc
    cT = ctx.c_theta_t(T, sched.T)
    m2 = float((np.abs(w_cube) ** 2).sum())
    lhs = float((v ** 4).mean()) - 6.0 * cT * m2 + 3.0 * cT * cT
    return abs(lhs - s_acc)


# -- scans and trend summaries ---------------------------------------------------


@dataclass
class ScanResult:
    """Per-scale sample statistics plus a fitted log-log slope."""

    scales: list = field(default_factory=list)
    means: list = field(default_factory=list)
    second_moments: list = field(default_factory=list)
    stderrs: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    slope: float = np.nan
    slope_ci: tuple = (np.nan, np.nan)
    dropped: list = field(default_factory=list)

    def add(self, T: float, samples: np.ndarray):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size == 0:
            raise ValueError("empty sample set")
        self.scales.append(float(T))
        self.means.append(float(samples.mean()))
        self.second_moments.append(float((samples ** 2).mean()))
        se = samples.std(ddof=1) / np.sqrt(samples.size) if samples.size > 1 else 0.0
        self.stderrs.append(float(se))
        self.counts.append(int(samples.size))

    def fit(self, values: list | None = None):
        """Fit log(values) vs log(T), dropping degenerate (<= 0) points."""
        ys = self.means if values is None else list(values)
        pairs = [(t, y) for t, y in zip(self.scales, ys) if y > 0.0
                 and np.isfinite(y)]
        self.dropped = [t for t, y in zip(self.scales, ys)
                        if not (y > 0.0 and np.isfinite(y))]
        if len(pairs) < 3:
            raise ValueError("slope fit needs at least 3 usable scan points")
        ts, vals = zip(*pairs)
        self.slope, self.slope_ci = fit_log_slope(np.array(ts), np.array(vals))
        return self.slope


def fit_log_slope(ts: np.ndarray, ys: np.ndarray) -> tuple[float, tuple]:
    """OLS slope of log y on log t with a 95% t-interval."""
    x = np.log(ts)
    y = np.log(ys)
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    resid = y - ym - slope * (x - xm)
    if n > 2:
        se = float(np.sqrt((resid ** 2).sum() / (n - 2) / sxx))
        half = stats.t.ppf(0.975, n - 2) * se
    else:
        half = np.inf
    return slope, (slope - half, slope + half)


def consecutive_decrease_pvalues(samples_by_scale: list[np.ndarray]) -> list[float]:
    """One-sided Mann-Whitney p-values that each scan point dominates the next.

    All below the chosen level certifies a strictly decreasing trend in the
    rank-test sense.
    """
    out = []
    for a, b in zip(samples_by_scale[:-1], samples_by_scale[1:]):
        if np.allclose(a, a[0]) and np.allclose(b, b[0]):
            out.append(0.0 if a[0] > b[0] else 1.0)
            continue
        res = stats.mannwhitneyu(a, b, alternative="greater")
        out.append(float(res.pvalue))
    return out
