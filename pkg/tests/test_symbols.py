import numpy as np
import pytest
from scipy.integrate import quad

from scalefield.spectral import TorusGrid, SpectralField, apply_multiplier
from scalefield.symbols import (DEFAULT_PARAMS, DomainError, eval_rho,
                                eval_sigma_sq, eval_theta, rho_grid,
                                sigma_sq_grid, theta_grid, j_symbol_grid,
                                interval_j_grid)
from test_spectral import random_field


def test_rho_plateau_and_support():
    assert eval_rho(2.0, (0, 0, 0)) == 1.0          # <n> = 1, ratio 0.5
    # a mode with <n> = 1.2 at t = 1: ratio 1.2 beyond the support
    n = (np.sqrt(1.2 ** 2 - 1.0), 0.0, 0.0)
    assert eval_rho(1.0, n) == 0.0
    with pytest.raises(DomainError):
        eval_rho(0.0, (1, 0, 0))
    with pytest.raises(DomainError):
        eval_rho(-1.0, (1, 0, 0))


def test_rho_midpoint_is_half():
    # quintic smoothstep q(1/2) = 1/2 exactly, hit at ratio 0.95
    n = (np.sqrt(0.95 ** 2 - 1.0) if 0.95 > 1 else 0.0,)
    # build a synthetic <n>/t = 0.95 with t = <n>/0.95 for an integer mode
    t = np.sqrt(2.0) / 0.95  # mode (1,0,0) has <n> = sqrt(2)
    assert eval_rho(t, (1, 0, 0)) == pytest.approx(0.5, abs=1e-14)


def test_rho_monotonicity():
    ts = np.linspace(0.5, 6.0, 60)
    for n in [(0, 0, 0), (1, 1, 0), (2, 2, 2)]:
        vals = [eval_rho(t, n) for t in ts]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    # non-increasing in <n> at fixed t
    t = 3.0
    jns = [np.array([k, 0, 0]) for k in range(0, 5)]
    vals = [eval_rho(t, n) for n in jns]
    assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_sigma_sq_zero_off_ramp():
    assert eval_sigma_sq(4.0, (0, 0, 0)) == 0.0     # ratio 0.25, plateau
    assert eval_sigma_sq(1.0, (2, 0, 0)) == 0.0     # ratio > 1, outside support
    assert eval_sigma_sq(3.3, (3, 0, 0)) > 0.0      # <n> = sqrt(10), inside ramp


def test_sigma_sq_integrates_to_rho_sq():
    # fundamental-theorem oracle: int_0^T sigma^2(s, n) ds = rho_T(n)^2
    for n in [(0, 0, 0), (1, 1, 0), (2, 1, 2), (3, 0, 0)]:
        jn = np.sqrt(1 + sum(c * c for c in n))
        for T in (jn * 0.97, jn * 1.05, jn / 0.9, 2 * jn):
            lo, hi = jn, jn / 0.9
            a, b = max(min(T, hi), lo), min(T, hi)
            val, err = quad(lambda s: eval_sigma_sq(s, n), lo, min(T, hi),
                            limit=200)
            target = eval_rho(T, n) ** 2
            assert val == pytest.approx(target, abs=1e-8)


def test_theta_paper_values():
    assert eval_theta(4.0, (1, 0, 0)) == 1.0        # |n| = 1 <= t/2
    assert eval_theta(1.0, (0, 0, 0)) == 0.0        # zeta(1) = 0 and eta(0) = 1
    # theta = 1 on |n| <= t/2 for t >= T0 = 3
    for t in (3.0, 3.5, 5.0):
        for n in [(0, 0, 0), (1, 0, 0), (1, 1, 0)]:
            if np.sqrt(sum(c * c for c in n)) <= t / 2:
                assert eval_theta(t, n) == 1.0


def test_theta_kills_sigma_forward_in_scale():
    # theta_t(n) * sigma_s(n) = 0 for every grid mode and every s >= t
    grid = TorusGrid(dim=3, mode_cutoff=6)
    modes = grid.modes().reshape(3, -1).T
    ts = np.linspace(0.5, 12.0, 24)
    for t in ts:
        for s in ts[ts >= t]:
            for n in modes[::7]:
                assert eval_theta(t, n) * eval_sigma_sq(s, n) == 0.0


def test_telescoping_rho_sq():
    grid = TorusGrid(dim=3, mode_cutoff=5)
    jn = grid.japanese_norms()
    knots = np.concatenate([[0.0], np.geomspace(0.8, 7.0, 57)])
    total = np.zeros_like(jn)
    for t0, t1 in zip(knots[:-1], knots[1:]):
        total += rho_grid(t1, jn) ** 2 - rho_grid(t0, jn) ** 2
    assert np.abs(total - rho_grid(knots[-1], jn) ** 2).max() < 1e-12


def test_interval_j_matches_mean_sigma_sq():
    grid = TorusGrid(dim=3, mode_cutoff=4)
    jn = grid.japanese_norms()
    t0, t1 = 2.3, 2.9
    w = interval_j_grid(t0, t1, jn)
    for n, target in [((2, 0, 0), None), ((1, 1, 1), None)]:
        val, _ = quad(lambda s: eval_sigma_sq(s, n), t0, t1, limit=200)
        jnn = np.sqrt(1 + sum(c * c for c in n))
        idx = tuple(c + 4 for c in n)
        assert w[idx] == pytest.approx(np.sqrt(val / (t1 - t0)) / jnn, abs=1e-9)


def test_j_spectral_decay_bound():
    # ||J_t f||_L2 <= C <t>^{-3/2} ||f||_L2 with C within 2x of the symbol sup
    grid = TorusGrid(dim=3, mode_cutoff=8)
    jn = grid.japanese_norms()
    rng = np.random.default_rng(11)
    ts = np.linspace(1.2, 9.0, 12)
    c_sym = max(float(np.max(j_symbol_grid(t, jn)) * (1 + t * t) ** 0.75)
                for t in ts)
    c_emp = 0.0
    for t in ts[::3]:
        sym = j_symbol_grid(t, jn)
        for _ in range(5):
            f = random_field(grid, rng)
            jf = apply_multiplier(sym, f)
            c_emp = max(c_emp, jf.l2_norm() * (1 + t * t) ** 0.75 / f.l2_norm())
    assert c_emp <= 2.0 * c_sym


def test_j_kills_plateau_modes():
    grid = TorusGrid(dim=3, mode_cutoff=3)
    jn = grid.japanese_norms()
    t = 10.0  # every retained mode is on the plateau of rho_t
    rng = np.random.default_rng(12)
    f = random_field(grid, rng)
    jf = apply_multiplier(j_symbol_grid(t, jn), f)
    assert jf.l2_norm() == 0.0


def test_grid_symbols_match_scalars():
    grid = TorusGrid(dim=3, mode_cutoff=3)
    jn = grid.japanese_norms()
    an = grid.mode_norms()
    t = 2.7
    r, s, th = rho_grid(t, jn), sigma_sq_grid(t, jn), theta_grid(t, an)
    for n in [(0, 0, 0), (1, -1, 0), (2, 2, 2), (3, 0, 1)]:
        idx = tuple(c + 3 for c in n)
        assert r[idx] == pytest.approx(eval_rho(t, n), abs=1e-15)
        assert s[idx] == pytest.approx(eval_sigma_sq(t, n), abs=1e-15)
        assert th[idx] == pytest.approx(eval_theta(t, n), abs=1e-15)
