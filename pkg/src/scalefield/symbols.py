"""Closed-form multiplier symbols for the scale regularization.

All cutoff profiles are built from the C^2 quintic smoothstep
q(s) = 10 s^3 - 15 s^4 + 6 s^5, so the scale derivative entering the shell
weight sigma_t^2 = d/dt [rho_t^2] is available exactly as a piecewise
polynomial, never by finite differences.

rho and sigma are functions of the Japanese bracket <n> = sqrt(1+|n|^2);
the low-pass profile theta_t is a function of the plain modulus |n|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymbolParams",
    "DEFAULT_PARAMS",
    "eval_rho",
    "eval_sigma_sq",
    "eval_theta",
    "rho_grid",
    "sigma_sq_grid",
    "theta_grid",
    "j_symbol_grid",
    "interval_j_grid",
    "bessel_grid",
    "zeta",
]


class DomainError(ValueError):
    """Raised when a symbol is evaluated outside its scale domain."""


def _smoothstep(s):
    """q(s) on [0,1]: 0 -> 1 with vanishing first and second derivatives."""
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 + s * (-15.0 + 6.0 * s))


def _smoothstep_deriv(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, s ** 2 * (30.0 + s * (-60.0 + 30.0 * s)), 0.0)


def step_down(r, lo, hi):
    """1 for r <= lo, 0 for r >= hi, quintic ramp in between."""
    r = np.asarray(r, dtype=np.float64)
    return 1.0 - _smoothstep((r - lo) / (hi - lo))


def step_down_deriv(r, lo, hi):
    r = np.asarray(r, dtype=np.float64)
    return -_smoothstep_deriv((r - lo) / (hi - lo)) / (hi - lo)


@dataclass(frozen=True)
class SymbolParams:
    """Plateau/support knots of the cutoff profiles.

    The large-scale switch zeta turns on over [zeta_lo, zeta_hi]; with the
    defaults the low-pass profile satisfies theta_t = 1 on |xi| <= t/2 for
    every t >= T0 = 3.
    """

    rho_plateau: float = 0.9
    rho_support: float = 1.0
    theta_inner: float = 0.5
    theta_outer: float = 2.0 / 3.0
    eta_inner: float = 1.0
    eta_outer: float = 2.0
    zeta_lo: float = 2.0
    zeta_hi: float = 3.0
    T0: float = 3.0


DEFAULT_PARAMS = SymbolParams()


def _jnorm(n) -> float:
    n = np.asarray(n, dtype=np.float64)
    return float(np.sqrt(1.0 + (n ** 2).sum()))


def _require_positive_scale(t: float):
    if not t > 0.0:
        raise DomainError(f"scale must be positive, got {t}")


# -- scalar spec operations ------------------------------------------------


def eval_rho(t: float, n, params: SymbolParams = DEFAULT_PARAMS) -> float:
    """rho(<n>/t): 1 on the plateau, 0 outside the unit-ball support."""
    _require_positive_scale(t)
    return float(step_down(_jnorm(n) / t, params.rho_plateau, params.rho_support))


def eval_sigma_sq(t: float, n, params: SymbolParams = DEFAULT_PARAMS) -> float:
    """d/dt [rho(<n>/t)^2], evaluated from the exact piecewise polynomial."""
    _require_positive_scale(t)
    r = _jnorm(n) / t
    rho = step_down(r, params.rho_plateau, params.rho_support)
    drho = step_down_deriv(r, params.rho_plateau, params.rho_support)
    return float(-2.0 * r * rho * drho / t)


def zeta(t, params: SymbolParams = DEFAULT_PARAMS):
    """Large-scale switch: 0 below zeta_lo, 1 above zeta_hi."""
    return 1.0 - step_down(np.asarray(t, dtype=np.float64),
                           params.zeta_lo, params.zeta_hi)


def eval_theta(t: float, n, params: SymbolParams = DEFAULT_PARAMS) -> float:
    """Low-pass profile theta_t(n) in [0,1].

    theta_t = (1 - eta) theta~_t + zeta(t) eta theta~_t with theta~ the
    quintic step in |n|/t, so theta_t * sigma_s = 0 for all s >= t on grid
    modes, and theta_t = 1 on |n| <= t/2 once t >= T0.
    """
    _require_positive_scale(t)
    an = float(np.sqrt((np.asarray(n, dtype=np.float64) ** 2).sum()))
    base = step_down(an / t, params.theta_inner, params.theta_outer)
    eta = step_down(an, params.eta_inner, params.eta_outer)
    return float(((1.0 - eta) + zeta(t, params) * eta) * base)


# -- vectorized symbol cubes --------------------------------------------------
# These take precomputed norm arrays (<n> or |n|) and also accept t == 0 as the
# everything-off limit, which the marching code uses for the knot at the origin.


def rho_grid(t: float, jnorms: np.ndarray,
             params: SymbolParams = DEFAULT_PARAMS) -> np.ndarray:
    if t <= 0.0:
        return np.zeros_like(jnorms)
    return step_down(jnorms / t, params.rho_plateau, params.rho_support)


def sigma_sq_grid(t: float, jnorms: np.ndarray,
                  params: SymbolParams = DEFAULT_PARAMS) -> np.ndarray:
    if t <= 0.0:
        return np.zeros_like(jnorms)
    r = jnorms / t
    rho = step_down(r, params.rho_plateau, params.rho_support)
    drho = step_down_deriv(r, params.rho_plateau, params.rho_support)
    return -2.0 * r * rho * drho / t


def theta_grid(t: float, abs_norms: np.ndarray,
               params: SymbolParams = DEFAULT_PARAMS) -> np.ndarray:
    if t <= 0.0:
        return np.zeros_like(abs_norms)
    base = step_down(abs_norms / t, params.theta_inner, params.theta_outer)
    eta = step_down(abs_norms, params.eta_inner, params.eta_outer)
    return ((1.0 - eta) + zeta(t, params) * eta) * base


def j_symbol_grid(t: float, jnorms: np.ndarray,
                  params: SymbolParams = DEFAULT_PARAMS) -> np.ndarray:
    """Symbol of J_t = sigma_t(D) <D>^{-1}."""
    return np.sqrt(sigma_sq_grid(t, jnorms, params)) / jnorms


def interval_j_grid(t0: float, t1: float, jnorms: np.ndarray,
                    params: SymbolParams = DEFAULT_PARAMS) -> np.ndarray:
    """Interval-exact J weight sqrt((rho_t1^2 - rho_t0^2)/dt) / <n>.

    Equals the root-mean of sigma^2 over [t0, t1]; quadratures built from it
    reproduce the per-mode variance transport of the sampler exactly, which
    keeps Girsanov reweighting free of time-discretization bias.
    """
    dt = t1 - t0
    if dt <= 0.0:
        raise DomainError("interval must have positive length")
    d = rho_grid(t1, jnorms, params) ** 2 - rho_grid(t0, jnorms, params) ** 2
    return np.sqrt(np.maximum(d, 0.0) / dt) / jnorms


def bessel_grid(s: float, jnorms: np.ndarray) -> np.ndarray:
    """Symbol of <D>^s."""
    return jnorms ** s
