"""Path-dependent drift equation, reweighted measure samples, and the
density diagnostics.

The drift is marched explicitly over the scale knots: at knot k the step
functional combines the cubic Wick block of the current field argument, a
high-low paraproduct coupling to the accumulated drift integral (active
above the scale T_bar), and a half-smoothed odd Hermite stabilizer.  Only
past drift values enter through I(u), so the solution is adapted by
construction and the same increments can be reused in the change of measure.

Every projection uses value grids large enough that the retained
coefficients are exact; combined with the interval-exact J weights this
makes the shift/remainder decomposition an identity up to roundoff and the
discrete change of measure exact in law.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
import scipy.fft as sfft

from .besov import block_partition
from .paths import (DriftPath, FieldPath, NoisePath, ScaleSchedule,
                    ScheduleGeometry, geometry)
from .spectral import SpectralField, TorusGrid
from .symbols import DEFAULT_PARAMS, SymbolParams, theta_grid
from .wick import WickContext, hermite_coefficients, potential_V

__all__ = ["DriftParams", "DriftRun", "RemainderResult", "drift_ops",
           "xi_step", "solve_under_P", "solve_under_Q", "log_density_DT",
           "remainder_decomposition"]


@dataclass(frozen=True)
class DriftParams:
    """Physics knobs of one drift solve."""

    lam: float
    T: float
    N_stop: float = 1e6
    T_bar: float = 2.0
    n_aux: int = 5
    aux_on: bool = True
    gamma: float = 0.0
    picard: int = 0     # optional per-step refinement passes (diagnostic)

    def __post_init__(self):
        if self.lam < 0.0 or self.T_bar < 0.0 or self.N_stop < 0.0:
            raise ValueError("lam, T_bar, N_stop must be nonnegative")
        if self.aux_on and self.n_aux % 2 == 0:
            raise ValueError(f"auxiliary order must be odd, got {self.n_aux}")


class _ValueSpace:
    """Cached embed/extract transforms for one FFT size."""

    def __init__(self, dim: int, size: int):
        self.dim = dim
        self.size = size
        self.norm = float(size ** dim)
        self._idx: dict[int, tuple] = {}

    def idx(self, band: int):
        if band not in self._idx:
            ax = np.arange(-band, band + 1) % self.size
            self._idx[band] = np.ix_(*([ax] * self.dim))
        return self._idx[band]

    def values(self, cube: np.ndarray, band: int) -> np.ndarray:
        arr = np.zeros((self.size,) * self.dim, dtype=np.complex128)
        arr[self.idx(band)] = cube
        return (sfft.ifftn(arr, workers=-1) * self.norm).real

    def coeffs(self, vals: np.ndarray, band: int) -> np.ndarray:
        arr = sfft.fftn(vals, workers=-1)
        return arr[self.idx(band)] / self.norm


class DriftOps:
    """Per-(grid, schedule) machinery shared by every replica."""

    def __init__(self, grid: TorusGrid, schedule: ScaleSchedule,
                 ctx: WickContext, sym: SymbolParams = DEFAULT_PARAMS):
        self.grid = grid
        self.schedule = schedule
        self.ctx = ctx
        self.sym = sym
        self.geo: ScheduleGeometry = geometry(grid, schedule, sym)
        N = grid.mode_cutoff
        self.N = N
        d = grid.dim
        self.vs_poly = _ValueSpace(d, sfft.next_fast_len(6 * N + 2))
        self.vs_para = _ValueSpace(d, sfft.next_fast_len(4 * N + 2))
        self.jbar = self.geo.weight
        self.dt = schedule.dt
        self.active = self.geo.active
        knots = schedule.knots
        self.c = np.array([ctx.c(t) for t in knots])
        self.c_smooth = np.array([ctx.c_smooth(t) for t in knots])
        self.theta = np.stack([theta_grid(t, self.geo.an, sym) for t in knots])
        self.inv_sqrt_jn = self.geo.jn ** -0.5
        self.part_lo = block_partition(grid, N)
        self.part_hi = block_partition(grid, 2 * N)

    # -- paraproduct pieces projected to the retained band --------------------

    def para_project(self, f_cube: np.ndarray, f_band: int, g_cube: np.ndarray,
                     mode: str) -> np.ndarray:
        """Bony piece of (f, g) -> exact coefficients on the retained band.

        g always lives on the retained band; f may be a square (band 2N).
        """
        part_f = self.part_hi if f_band == 2 * self.N else self.part_lo
        part_g = self.part_lo
        vs = self.vs_para
        acc = np.zeros((vs.size,) * self.grid.dim)
        jg = part_g.j_max
        start = 1 if mode == "greater" else -1
        for i in range(start, part_f.j_max + 1):
            if mode == "greater":
                gmask = part_g.low_pass(min(i - 2, jg))
            elif mode == "resonant":
                hi = min(i + 1, jg)
                lo = i - 2
                if hi < -1:
                    continue
                gmask = part_g.low_pass(hi) - part_g.low_pass(max(lo, -2))
            else:  # less: j > i + 1
                m = min(i + 1, jg)
                gmask = 1.0 - part_g.low_pass(m)
            if not gmask.any():
                continue
            fv = vs.values(f_cube * part_f.symbol(i), f_band)
            gv = vs.values(g_cube * gmask, self.N)
            acc += fv * gv
        return vs.coeffs(acc, self.N)


@lru_cache(maxsize=4)
def _ops_cached(grid: TorusGrid, schedule: ScaleSchedule,
                sym: SymbolParams) -> DriftOps:
    return DriftOps(grid, schedule, WickContext(grid, sym), sym)


def drift_ops(grid: TorusGrid, schedule: ScaleSchedule,
              sym: SymbolParams = DEFAULT_PARAMS) -> DriftOps:
    return _ops_cached(grid, schedule, sym)


# -- the step functional -------------------------------------------------------


def _xi_cube(ops: DriftOps, k: int, h_cube: np.ndarray, iu_cube: np.ndarray,
             params: DriftParams) -> np.ndarray:
    """Drift value at knot k from the field argument and past drift integral."""
    if not ops.active[k]:
        return np.zeros_like(h_cube)
    t = ops.schedule.knots[k]
    jb = ops.jbar[k]
    vs = ops.vs_poly
    hv = vs.values(h_cube, ops.N)
    out = np.zeros_like(h_cube)
    if params.lam > 0.0:
        c = ops.c[k]
        cube3 = vs.coeffs(hv ** 3 - (3.0 * c) * hv, ops.N)
        out -= (4.0 * params.lam) * jb * cube3
        if t >= params.T_bar:
            sq = vs.coeffs(hv * hv, 2 * ops.N)
            sq[(2 * ops.N,) * ops.grid.dim] -= c
            flat = ops.theta[k] * iu_cube
            para = ops.para_project(sq, 2 * ops.N, flat, "greater")
            out -= (12.0 * params.lam) * jb * para
    if params.aux_on:
        gv = vs.values(ops.inv_sqrt_jn * h_cube, ops.N)
        he = hermite_coefficients(params.n_aux, ops.c_smooth[k])
        aux_v = np.zeros_like(gv)
        for a in he[::-1]:
            aux_v = aux_v * gv + a
        aux = vs.coeffs(aux_v, ops.N)
        out -= jb * ops.inv_sqrt_jn * aux
    return out


def xi_step(k: int, H, Iu_k: SpectralField, Iu_flat_k: SpectralField,
            params: DriftParams, ops: DriftOps) -> SpectralField:
    """Public step functional on spectral fields.

    H may be a FieldPath (its knot-k snapshot is used) or the snapshot
    itself; Iu_flat_k is accepted for interface completeness and checked
    against the scale-matched low-pass of Iu_k.
    """
    h = H.field(k) if isinstance(H, FieldPath) else H
    if Iu_flat_k is not None:
        expect = ops.theta[k] * Iu_k.coeffs
        if np.abs(expect - Iu_flat_k.coeffs).max() > 1e-10:
            raise ValueError("Iu_flat_k is not the scale-matched low-pass of Iu_k")
    cube = _xi_cube(ops, k, h.coeffs, Iu_k.coeffs, params)
    return SpectralField(ops.grid, cube)


# -- marching ----------------------------------------------------------------


@dataclass
class DriftRun:
    """Joint record of one drift replica."""

    mode: str
    params: DriftParams
    W: FieldPath
    u: DriftPath
    Iu: FieldPath
    stop_index: int
    log_weight: float
    logD: float
    energy_running: np.ndarray
    W_free: FieldPath | None = None
    noise: NoisePath | None = None
    aborted: bool = False
    abort_knot: int | None = None

    @property
    def stopped(self) -> bool:
        return self.stop_index < self.u.schedule.n_intervals

    def drift_energy(self) -> float:
        return float(self.energy_running[-1])


def _march(ops: DriftOps, params: DriftParams, h_of_knot, picard_h_shift=None):
    """Shared explicit marching.

    h_of_knot(k, I_k) -> field-argument cube at knot k.  picard_h_shift is
    the sensitivity of that argument to a refinement bump of I(u) (-1 when
    the argument is W - I(u), None when it is a held path).
    Returns (u, Iu, stop_index, energy_running, aborted, abort_knot).
    """
    grid, sched = ops.grid, ops.schedule
    K = sched.n_intervals
    u = DriftPath.zeros(grid, sched)
    Iu = FieldPath.zeros(grid, sched)
    running = np.zeros(K + 1)
    stop_index = K
    frozen = False
    aborted = False
    abort_knot = None
    icube = Iu.snapshots[0].copy()
    for k in range(K):
        running[k + 1] = running[k]
        if not frozen and running[k] >= params.N_stop:
            frozen = True
            stop_index = k
        if not frozen and ops.active[k]:
            h = h_of_knot(k, icube)
            with np.errstate(over="ignore", invalid="ignore"):
                uk = _xi_cube(ops, k, h, icube, params)
                for _ in range(params.picard):
                    bump = 0.5 * ops.jbar[k] * uk * ops.dt[k]
                    h_ref = (h if picard_h_shift is None
                             else h + picard_h_shift * bump)
                    uk = _xi_cube(ops, k, h_ref, icube + bump, params)
            if not np.all(np.isfinite(uk)):
                aborted = True
                abort_knot = k
                break
            u.coeffs[k] = uk
            running[k + 1] = running[k] + float(
                (np.abs(uk) ** 2).sum() * ops.dt[k])
            icube = icube + ops.jbar[k] * uk * ops.dt[k]
        Iu.snapshots[k + 1] = icube
    if aborted:
        u.coeffs[abort_knot:] = 0.0
        for j in range(abort_knot, K):
            Iu.snapshots[j + 1] = Iu.snapshots[abort_knot]
    return u, Iu, stop_index, running, aborted, abort_knot


def _pairing(u: DriftPath, increments: np.ndarray) -> float:
    axes = tuple(range(1, u.coeffs.ndim))
    return float((u.coeffs * increments.conj()).real.sum(axis=axes).sum())


def _recover_increments(path: FieldPath, ops: DriftOps) -> np.ndarray:
    """dB on the active shell from exact-transport increments of a free path."""
    out = np.zeros((ops.schedule.n_intervals,) + ops.grid.cube_shape(),
                   dtype=np.complex128)
    for k in range(ops.schedule.n_intervals):
        w = ops.jbar[k]
        mask = w > 0.0
        if mask.any():
            d = path.snapshots[k + 1] - path.snapshots[k]
            out[k][mask] = d[mask] / w[mask]
    return out


def solve_under_P(W: FieldPath, params: DriftParams, ctx: WickContext,
                  noise: NoisePath | None = None) -> DriftRun:
    """March u = Xi(W - I(u), u) along a free-field path sampled under P."""
    ops = drift_ops(W.grid, W.schedule, ctx.params)
    snaps = W.snapshots

    def h_of_knot(k, icube):
        return snaps[k] - icube

    u, Iu, stop, running, aborted, abort_knot = _march(
        ops, params, h_of_knot, picard_h_shift=-1.0)
    incs = noise.increments if noise is not None else _recover_increments(W, ops)
    quad = float((u.l2_sq() * ops.dt).sum())
    log_weight = _pairing(u, incs) - 0.5 * quad
    run = DriftRun(mode="under_P", params=params, W=W, u=u, Iu=Iu,
                   stop_index=stop, log_weight=log_weight, logD=0.0,
                   energy_running=running, noise=noise, aborted=aborted,
                   abort_knot=abort_knot)
    a, b = _counterterms(params, ctx)
    run.logD = -potential_V(W.terminal, params.lam, a, b) - run.log_weight
    return run


def solve_under_Q(Wtilde: FieldPath, params: DriftParams, ctx: WickContext,
                  noise: NoisePath | None = None) -> DriftRun:
    """March u = Xi(Wtilde, u) with a fresh free path playing the shifted field.

    The drift-measure sample is W = Wtilde + I(u); the recorded weight is the
    Girsanov density of the tilt evaluated along the canonical increments
    dX = u dt + dB.
    """
    ops = drift_ops(Wtilde.grid, Wtilde.schedule, ctx.params)
    snaps = Wtilde.snapshots

    def h_of_knot(k, icube):
        return snaps[k]

    u, Iu, stop, running, aborted, abort_knot = _march(
        ops, params, h_of_knot, picard_h_shift=None)
    W = FieldPath(Wtilde.grid, Wtilde.schedule, Wtilde.snapshots + Iu.snapshots)
    incs = (noise.increments if noise is not None
            else _recover_increments(Wtilde, ops))
    quad = float((u.l2_sq() * ops.dt).sum())
    log_weight = _pairing(u, incs) + 0.5 * quad  # pairing against dX adds quad
    run = DriftRun(mode="under_Q", params=params, W=W, u=u, Iu=Iu,
                   stop_index=stop, log_weight=log_weight, logD=0.0,
                   energy_running=running, W_free=Wtilde, noise=noise,
                   aborted=aborted, abort_knot=abort_knot)
    a, b = _counterterms(params, ctx)
    run.logD = log_density_DT(run, a, b)
    return run


def _counterterms(params: DriftParams, ctx: WickContext) -> tuple[float, float]:
    from .wick import default_counterterms
    return default_counterterms(params.T, params.lam, ctx, params.gamma)


def log_density_DT(run: DriftRun, a: float, b: float) -> float:
    """log D_T = -V_T(W_T) - int u dX + 1/2 int ||u||^2 dt.

    The stochastic integral pairs the solved drift with the increments of the
    canonical process: the raw noise under P, the drift-shifted increments
    under the drift measure.  Recomputed from the run's pieces so the
    cancellation against log_weight is a genuine cross-check.
    """
    ops = drift_ops(run.W.grid, run.W.schedule)
    incs = (run.noise.increments if run.noise is not None
            else _recover_increments(run.W_free or run.W, ops))
    quad = float((run.u.l2_sq() * run.u.schedule.dt).sum())
    pair = _pairing(run.u, incs)
    if run.mode == "under_Q":
        pair += quad  # dX = u dt + dB along a drift-measure sample
    v = potential_V(run.W.terminal, run.params.lam, a, b)
    return -v - pair + 0.5 * quad


# -- shift / remainder decomposition ------------------------------------------


@dataclass
class RemainderResult:
    r: DriftPath
    residual: float
    u_w: DriftPath
    h_w: DriftPath
    Iw: FieldPath
    Ih: FieldPath


def remainder_decomposition(Wtilde: FieldPath, w: DriftPath,
                            params: DriftParams, ctx: WickContext) -> RemainderResult:
    """Explicit remainder of the drift under a deterministic shift of the noise.

    Solves u^w from the shifted field argument Wtilde + I(w), forms
    h^w = u^w + w, and evaluates the remainder r^w term by term; the returned
    residual is the max-over-knots L2 defect of

        u^w + 4 lam J [[Wtilde^3]] + 12 lam J ([[Wtilde^2]] > I_flat(h^w)) - r^w.
    """
    ops = drift_ops(Wtilde.grid, Wtilde.schedule, ctx.params)
    from .paths import integrate_drift
    grid, sched = Wtilde.grid, Wtilde.schedule
    K = sched.n_intervals
    lam = params.lam
    Iw = integrate_drift(w, ops.geo)
    snaps = Wtilde.snapshots

    def h_of_knot(k, icube):
        return snaps[k] + Iw.snapshots[k]

    u_w, Iu, stop, running, aborted, abort_knot = _march(ops, params, h_of_knot)
    if aborted:
        raise FloatingPointError(f"shifted drift solve exploded at knot {abort_knot}")
    h_w = DriftPath(grid, sched, u_w.coeffs + w.coeffs)
    Ih = FieldPath(grid, sched, Iu.snapshots + Iw.snapshots)
    r = DriftPath.zeros(grid, sched)
    vs = ops.vs_poly
    N = ops.N
    dim = grid.dim
    residual = 0.0
    n = params.n_aux
    for k in range(K):
        if not ops.active[k]:
            continue
        t = sched.knots[k]
        jb = ops.jbar[k]
        c = ops.c[k]
        wt_v = vs.values(snaps[k], N)
        iw_v = vs.values(Iw.snapshots[k], N)
        sq = vs.coeffs(wt_v * wt_v, 2 * N)
        sq[(2 * N,) * dim] -= c                      # [[Wtilde^2]] as a field
        iw = Iw.snapshots[k]
        theta = ops.theta[k]
        term = np.zeros_like(r.coeffs[k])
        if lam > 0.0:
            # Bony pieces of [[Wtilde^2]] * I(w), the high piece split by theta
            hi_cut = ops.para_project(sq, 2 * N, (1.0 - theta) * iw, "greater")
            reso = ops.para_project(sq, 2 * N, iw, "resonant")
            low = ops.para_project(sq, 2 * N, iw, "less")
            term -= 12.0 * lam * jb * (hi_cut + reso + low)
            # cubic-in-shift blocks, evaluated pointwise
            term -= 12.0 * lam * jb * vs.coeffs(wt_v * iw_v * iw_v, N)
            term -= 4.0 * lam * jb * vs.coeffs(iw_v ** 3, N)
            flat_u = theta * Iu.snapshots[k]
            if t >= params.T_bar:
                cross = vs.coeffs(wt_v * iw_v, 2 * N)
                term -= 24.0 * lam * jb * ops.para_project(
                    cross, 2 * N, flat_u, "greater")
                iw2 = vs.coeffs(iw_v * iw_v, 2 * N)
                term -= 12.0 * lam * jb * ops.para_project(
                    iw2, 2 * N, flat_u, "greater")
            else:
                term += 12.0 * lam * jb * ops.para_project(
                    sq, 2 * N, flat_u, "greater")
        if params.aux_on:
            gt_v = vs.values(ops.inv_sqrt_jn * snaps[k], N)
            gw_v = vs.values(ops.inv_sqrt_jn * iw, N)
            cs = ops.c_smooth[k]
            acc = np.zeros_like(gt_v)
            for i in range(0, n + 1):
                he = hermite_coefficients(i, cs)
                hev = np.zeros_like(gt_v)
                for aco in he[::-1]:
                    hev = hev * gt_v + aco
                acc += comb(n, i) * hev * gw_v ** (n - i)
            term -= jb * ops.inv_sqrt_jn * vs.coeffs(acc, N)
        r.coeffs[k] = term
        # identity defect at this knot
        cube_wt = vs.coeffs(wt_v ** 3 - 3.0 * c * wt_v, N)
        flat_h = theta * Ih.snapshots[k]
        para_h = ops.para_project(sq, 2 * N, flat_h, "greater")
        defect = (u_w.coeffs[k] + 4.0 * lam * jb * cube_wt
                  + 12.0 * lam * jb * para_h - term)
        residual = max(residual, float(np.sqrt((np.abs(defect) ** 2).sum())))
    return RemainderResult(r=r, residual=residual, u_w=u_w, h_w=h_w,
                           Iw=Iw, Ih=Ih)
