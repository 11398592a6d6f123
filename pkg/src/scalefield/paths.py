"""Scale-indexed Gaussian field paths, drift quadratures, Girsanov pairings.

The sampler transports per-mode variance exactly between knots: over the
interval [t_k, t_{k+1}] the coefficient of mode n gains
(sigma_bar_k(n)/<n>) dB with sigma_bar_k^2 = (rho_{t_{k+1}}^2 - rho_{t_k}^2)/dt,
so the marginal variance at every knot is rho_t(n)^2 / <n>^2 identically, for
any schedule.  The same interval weight is used for every ds-quadrature
(drift integral I(u), control energy), which keeps the discrete Girsanov
change of measure exact in law: tilting by the pairing below shifts the mean
of W_T by exactly I_T(u).

Noise is drawn from counter-based Philox streams keyed by
(seed, replica, knot), with a fixed orbit layout inside each knot, so
replicas and knots are order-independent and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil, log

import numpy as np
from numpy.random import Generator, Philox

from .spectral import SpectralField, TorusGrid
from .symbols import DEFAULT_PARAMS, SymbolParams, rho_grid, theta_grid

__all__ = ["ScaleSchedule", "make_schedule", "NoisePath", "FieldPath",
           "sample_noise", "noise_increment", "build_W", "integrate_drift",
           "girsanov_log_weight", "ScheduleGeometry", "geometry"]

_BAND_RATIO = 10.0 / 9.0   # activation band of mode n is [<n>, <n>/0.9]
_GRID_START = 0.81         # below every band start and every mirrored band


@dataclass(frozen=True)
class ScaleSchedule:
    """Strictly increasing scale knots t_0 = 0 < ... < t_K = T."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", k)
        if k[0] != 0.0 or np.any(np.diff(k) <= 0.0):
            raise ValueError("knots must start at 0 and increase strictly")

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    @property
    def n_intervals(self) -> int:
        return len(self.knots) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.knots)

    def band_knot_count(self, center: float) -> int:
        """Knots strictly inside the activation band (center, center/0.9)."""
        inside = (self.knots > center) & (self.knots < center * _BAND_RATIO)
        return int(inside.sum())

    def __hash__(self):
        return hash((len(self.knots), self.knots[-1], self.knots.tobytes()))

    def __eq__(self, other):
        return isinstance(other, ScaleSchedule) and np.array_equal(
            self.knots, other.knots)


def make_schedule(T: float, resolution: float = 1.0) -> ScaleSchedule:
    """Geometric knot grid on [0, T] dense enough for every activation band.

    Bands are geometrically similar (fixed ratio 10/9), so a geometric grid
    with ratio (10/9)^(1/(m+1)), m = ceil(10*resolution), puts at least m
    knots inside every band that fits below T.  The grid starts at 0.81 so
    the mirrored band [0.9<n>, <n>] of every mode below T is covered too.
    """
    if not T > 0.0:
        raise ValueError(f"terminal scale must be positive, got {T}")
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    m = ceil(10.0 * resolution)
    if T <= _GRID_START:
        return ScaleSchedule(np.array([0.0, T]))
    ratio = _BAND_RATIO ** (1.0 / (m + 1))
    n = ceil(log(T / _GRID_START) / log(ratio))
    geo = _GRID_START * ratio ** np.arange(n + 1)
    geo = geo[geo < T * (1.0 - 1e-12)]
    return ScaleSchedule(np.concatenate([[0.0], geo, [T]]))


class ScheduleGeometry:
    """Cached per-knot symbol cubes for one (grid, schedule, params) triple."""

    def __init__(self, grid: TorusGrid, schedule: ScaleSchedule,
                 params: SymbolParams = DEFAULT_PARAMS):
        self.grid = grid
        self.schedule = schedule
        self.params = params
        self.jn = grid.japanese_norms()
        self.an = grid.mode_norms()
        knots = schedule.knots
        rho_sq = np.stack([rho_grid(t, self.jn, params) ** 2 for t in knots])
        self.rho_sq = rho_sq
        dt = schedule.dt.reshape((-1,) + (1,) * grid.dim)
        diff = np.maximum(rho_sq[1:] - rho_sq[:-1], 0.0)
        # transport/quadrature weight sigma_bar_k / <n> per interval
        self.weight = np.sqrt(diff / dt) / self.jn
        self.active = [bool(w.any()) for w in self.weight]
        inv = 1.0 / self.jn ** 2
        self.c_knots = (rho_sq * inv).sum(axis=tuple(range(1, grid.dim + 1)))
        self.c_smooth_knots = (rho_sq * inv / self.jn).sum(
            axis=tuple(range(1, grid.dim + 1)))

    @property
    def dt(self) -> np.ndarray:
        return self.schedule.dt

    def theta_T(self) -> np.ndarray:
        return theta_grid(self.schedule.T, self.an, self.params)


@lru_cache(maxsize=8)
def _geometry_cached(grid: TorusGrid, schedule: ScaleSchedule,
                     params: SymbolParams) -> ScheduleGeometry:
    return ScheduleGeometry(grid, schedule, params)


def geometry(grid: TorusGrid, schedule: ScaleSchedule,
             params: SymbolParams = DEFAULT_PARAMS) -> ScheduleGeometry:
    return _geometry_cached(grid, schedule, params)


# -- noise ------------------------------------------------------------------


def _knot_generator(seed: int, replica: int, knot: int) -> Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF,
                    ((replica & 0xFFFFFFFF) << 32) | (knot & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return Generator(Philox(key=key))


def noise_increment(grid: TorusGrid, dt: float, seed: int, replica: int,
                    knot: int) -> np.ndarray:
    """One Hermitian complex Gaussian increment cube with E|dB(n)|^2 = dt."""
    orb = grid.orbit_index()
    gen = _knot_generator(seed, replica, knot)
    m = orb.rep.size
    z = gen.standard_normal(1 + 2 * m)
    cube = np.zeros(grid.n_modes(), dtype=np.complex128)
    half = np.sqrt(dt / 2.0)
    vals = half * (z[1:m + 1] + 1j * z[m + 1:])
    cube[orb.rep] = vals
    cube[orb.conj] = vals.conj()
    cube[orb.zero] = np.sqrt(dt) * z[0]
    return cube.reshape(grid.cube_shape())


@dataclass
class NoisePath:
    """Materialized per-interval increments dB_k(n) for one replica."""

    grid: TorusGrid
    schedule: ScaleSchedule
    seed: int
    replica: int
    increments: np.ndarray  # shape (K,) + cube

    def increment_field(self, k: int) -> SpectralField:
        return SpectralField(self.grid, self.increments[k], real=False)


def sample_noise(grid: TorusGrid, schedule: ScaleSchedule, seed: int,
                 replica: int = 0) -> NoisePath:
    dt = schedule.dt
    incs = np.empty((schedule.n_intervals,) + grid.cube_shape(),
                    dtype=np.complex128)
    for k in range(schedule.n_intervals):
        incs[k] = noise_increment(grid, dt[k], seed, replica, k)
    return NoisePath(grid, schedule, seed, replica, incs)


@dataclass
class FieldPath:
    """Per-knot real field snapshots on a shared grid and schedule."""

    grid: TorusGrid
    schedule: ScaleSchedule
    snapshots: np.ndarray  # shape (K+1,) + cube

    def field(self, k: int) -> SpectralField:
        return SpectralField(self.grid, self.snapshots[k])

    @property
    def terminal(self) -> SpectralField:
        return self.field(len(self.snapshots) - 1)

    @classmethod
    def zeros(cls, grid: TorusGrid, schedule: ScaleSchedule,
              n_snapshots: int | None = None) -> "FieldPath":
        n = schedule.n_intervals + 1 if n_snapshots is None else n_snapshots
        return cls(grid, schedule,
                   np.zeros((n,) + grid.cube_shape(), dtype=np.complex128))


def build_W(noise: NoisePath,
            params: SymbolParams = DEFAULT_PARAMS) -> FieldPath:
    """Free-field path with exact per-knot variance rho_t^2(n)/<n>^2."""
    geo = geometry(noise.grid, noise.schedule, params)
    path = FieldPath.zeros(noise.grid, noise.schedule)
    for k in range(noise.schedule.n_intervals):
        path.snapshots[k + 1] = (path.snapshots[k]
                                 + geo.weight[k] * noise.increments[k])
    return path


def integrate_drift(u: "DriftPath | np.ndarray", geo: ScheduleGeometry) -> FieldPath:
    """I_t(u): left-endpoint-in-u quadrature with the interval-exact J weight.

    I_{t_{k+1}} = I_{t_k} + sigma_bar_k/<n> * u_{t_k} * dt_k; linear in u.
    """
    coeffs = u if isinstance(u, np.ndarray) else u.coeffs
    K = geo.schedule.n_intervals
    if coeffs.shape[0] != K:
        raise ValueError(f"drift has {coeffs.shape[0]} knots, schedule needs {K}")
    out = FieldPath.zeros(geo.grid, geo.schedule)
    dt = geo.dt
    for k in range(K):
        out.snapshots[k + 1] = (out.snapshots[k]
                                + geo.weight[k] * coeffs[k] * dt[k])
    return out


@dataclass
class DriftPath:
    """Drift values at the left knot of each interval (adapted by construction)."""

    grid: TorusGrid
    schedule: ScaleSchedule
    coeffs: np.ndarray  # shape (K,) + cube

    @classmethod
    def zeros(cls, grid: TorusGrid, schedule: ScaleSchedule) -> "DriftPath":
        return cls(grid, schedule,
                   np.zeros((schedule.n_intervals,) + grid.cube_shape(),
                            dtype=np.complex128))

    def field(self, k: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[k])

    def l2_sq(self) -> np.ndarray:
        """||u_{t_k}||_{L^2}^2 per interval."""
        axes = tuple(range(1, self.coeffs.ndim))
        return (np.abs(self.coeffs) ** 2).sum(axis=axes)

    def energy(self) -> float:
        """int ||u||^2 dt over the whole schedule."""
        return float((self.l2_sq() * self.schedule.dt).sum())


def girsanov_log_weight(u: DriftPath, noise: NoisePath) -> float:
    """log density of the tilt: sum_k Re<u_k, dB_k> - 1/2 sum_k ||u_k||^2 dt_k."""
    if u.schedule != noise.schedule:
        raise ValueError("drift and noise live on different schedules")
    axes = tuple(range(1, u.coeffs.ndim))
    pairing = (u.coeffs * noise.increments.conj()).real.sum(axis=axes)
    quad = u.l2_sq() * u.schedule.dt
    return float(pairing.sum() - 0.5 * quad.sum())


def sample_terminal_field(grid: TorusGrid, T: float, seed: int, replica: int,
                          params: SymbolParams = DEFAULT_PARAMS,
                          knot_tag: int = 0xFFFF) -> np.ndarray:
    """One draw of W_T's coefficient cube directly from its marginal law.

    Schedule-free: mode n gets a complex Gaussian of variance rho_T^2/<n>^2.
    Uses its own knot tag so the draw never collides with path increments.
    """
    jn = grid.japanese_norms()
    scale = rho_grid(T, jn, params) / jn
    cube = noise_increment(grid, 1.0, seed, replica, knot_tag)
    return scale * cube
