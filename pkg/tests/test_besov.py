import itertools

import numpy as np
import pytest

from scalefield.spectral import TorusGrid, SpectralField, multiply_fields
from scalefield.besov import (block_partition, lp_block, besov_norm,
                              sobolev_norm, paraproduct, commutator)
from test_spectral import random_field


@pytest.fixture
def grid():
    return TorusGrid(dim=3, mode_cutoff=4)


def test_partition_of_unity(grid):
    part = block_partition(grid)
    total = part.symbols.sum(axis=0)
    assert np.abs(total - 1.0).max() < 1e-12
    # blocks further than one index apart have disjoint supports
    for i in range(-1, part.j_max + 1):
        for j in range(i + 2, part.j_max + 1):
            overlap = (part.symbol(i) != 0) & (part.symbol(j) != 0)
            assert not overlap.any()


def test_blocks_reassemble_field(grid):
    rng = np.random.default_rng(0)
    f = random_field(grid, rng)
    part = block_partition(grid)
    total = sum(lp_block(j, f).coeffs for j in range(-1, part.j_max + 1))
    assert np.abs(total - f.coeffs).max() < 1e-12


def test_block_of_constant(grid):
    c = SpectralField.constant(grid, 2.5)
    low = lp_block(-1, c)
    assert np.abs(low.coeffs - c.coeffs).max() < 1e-14


def test_single_mode_lands_in_one_block(grid):
    # |n| = 3 sits strictly inside the j = 1 annulus (0.9*2 = 1.8 .. 2.4*2 = 4.8
    # plateau of chi_2 covers it); check that all non-adjacent blocks vanish
    f = SpectralField.from_mode_dict(grid, {(3, 0, 0): 1.0})
    part = block_partition(grid, f.band)
    hits = [j for j in range(-1, part.j_max + 1)
            if lp_block(j, f).l2_norm() > 1e-13]
    assert len(hits) <= 2 and max(hits) - min(hits) <= 1
    total = sum(lp_block(j, f).coeffs for j in hits)
    assert np.abs(total - f.coeffs).max() < 1e-13


def test_besov_single_block_scaling(grid):
    f = SpectralField.from_mode_dict(grid, {(3, 0, 0): 1.0, (0, 3, 1): 0.5j})
    part = block_partition(grid, f.band)
    blocks = [j for j in range(-1, part.j_max + 1)
              if lp_block(j, f).l2_norm() > 1e-13]
    if len(blocks) == 1:
        j = blocks[0]
        for s in (-0.5, 0.0, 1.5):
            assert besov_norm(f, s, 2, 2) == pytest.approx(
                2.0 ** (j * s) * f.l2_norm(), rel=1e-12)


def test_besov_zero_and_homogeneity(grid):
    rng = np.random.default_rng(1)
    z = SpectralField.zeros(grid)
    assert besov_norm(z, 0.7, 4, 2) == 0.0
    f = random_field(grid, rng)
    for (s, p, q) in [(0.5, 2, 2), (-1.0, np.inf, np.inf), (0.0, 4, 1)]:
        assert besov_norm(-3.0 * f, s, p, q) == pytest.approx(
            3.0 * besov_norm(f, s, p, q), rel=1e-12)


def test_besov_lq_monotonicity(grid):
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = random_field(grid, rng)
        for s, p in [(0.5, 2), (-0.5, np.inf)]:
            n1 = besov_norm(f, s, p, 1)
            n2 = besov_norm(f, s, p, 2)
            ninf = besov_norm(f, s, p, np.inf)
            assert ninf <= n2 + 1e-12 and n2 <= n1 + 1e-12


def test_sobolev_norms(grid):
    rng = np.random.default_rng(3)
    f = random_field(grid, rng)
    assert sobolev_norm(f, 0.0, 2) == pytest.approx(f.l2_norm(), rel=1e-12)
    g = SpectralField.from_mode_dict(grid, {(2, 1, 0): 1.0})
    jn = np.sqrt(1 + 5)
    for s in (-0.5, 1.0):
        assert sobolev_norm(g, s, 2) == pytest.approx(
            jn ** s * g.l2_norm(), rel=1e-12)


def test_sobolev_besov_equivalence(grid):
    # H^s = B^s_{2,2} with equivalence constants computed exactly from the
    # block symbols on this finite cube; the per-mode ratio of the two
    # quadratic forms gives sharp two-sided bounds for the tolerance
    rng = np.random.default_rng(4)
    s = 0.25
    part = block_partition(grid)
    jn = grid.japanese_norms()
    weight = sum(4.0 ** (j * s) * part.symbol(j) ** 2
                 for j in range(-1, part.j_max + 1))
    ratio = np.sqrt(weight) / jn ** s
    lo, hi = float(ratio.min()), float(ratio.max())
    spread = max(1.0 - lo, hi - 1.0)
    for _ in range(5):
        f = random_field(grid, rng)
        b = besov_norm(f, s, 2, 2)
        h = sobolev_norm(f, s, 2)
        assert lo * h - 1e-12 <= b <= hi * h + 1e-12
        assert abs(b - h) <= spread * h


def test_trichotomy(grid):
    rng = np.random.default_rng(5)
    for _ in range(10):
        f = random_field(grid, rng)
        g = random_field(grid, rng)
        total = (paraproduct(f, g, "less") + paraproduct(f, g, "resonant")
                 + paraproduct(f, g, "greater"))
        prod = multiply_fields(f, g)
        err = (total - prod).l2_norm() / prod.l2_norm()
        assert err < 1e-10


def test_paraproduct_separated_blocks(grid):
    # f low (block 0 region), g high: f < g captures everything
    f = SpectralField.from_mode_dict(grid, {(1, 0, 0): 1.0})
    g = SpectralField.from_mode_dict(grid, {(4, 3, 0): 1.0})
    prod = multiply_fields(f, g)
    less = paraproduct(f, g, "less")
    assert (less - prod).l2_norm() < 1e-12
    assert paraproduct(f, g, "greater").l2_norm() < 1e-12
    assert paraproduct(f, g, "resonant").l2_norm() < 1e-12


def test_paraproduct_zero_and_bilinear(grid):
    rng = np.random.default_rng(6)
    z = SpectralField.zeros(grid)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    h = random_field(grid, rng)
    for mode in ("less", "greater", "resonant"):
        assert paraproduct(z, f, mode).l2_norm() == 0.0
        lhs = paraproduct(f, 2.0 * g + (-1.5) * h, mode)
        rhs = 2.0 * paraproduct(f, g, mode) + (-1.5) * paraproduct(f, h, mode)
        assert (lhs - rhs).l2_norm() < 1e-10 * max(lhs.l2_norm(), 1.0)


def brute_paraproduct(f, g, mode):
    """Direct block-sum oracle: loop over block pairs with explicit masks."""
    grid = f.grid
    out = None
    pf = block_partition(grid, f.band)
    pg = block_partition(grid, g.band)
    for i in range(-1, pf.j_max + 1):
        for j in range(-1, pg.j_max + 1):
            keep = ((mode == "greater" and j < i - 1)
                    or (mode == "less" and j > i + 1)
                    or (mode == "resonant" and abs(i - j) <= 1))
            if not keep:
                continue
            term = multiply_fields(lp_block(i, f), lp_block(j, g))
            out = term if out is None else out + term
    return out if out is not None else SpectralField.zeros(grid, f.band + g.band)


def test_paraproduct_matches_block_pair_oracle():
    grid = TorusGrid(dim=3, mode_cutoff=2)
    rng = np.random.default_rng(7)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    for mode in ("less", "greater", "resonant"):
        fast = paraproduct(f, g, mode)
        slow = brute_paraproduct(f, g, mode)
        assert (fast - slow).l2_norm() < 1e-10 * max(slow.l2_norm(), 1.0)


def test_commutator_trilinear_and_zero():
    grid = TorusGrid(dim=3, mode_cutoff=2, padding_factor=6)
    rng = np.random.default_rng(8)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    h = random_field(grid, rng)
    z = SpectralField.zeros(grid)
    assert commutator(z, g, h).l2_norm() == 0.0
    assert commutator(f, z, h).l2_norm() == 0.0
    assert commutator(f, g, z).l2_norm() == 0.0
    lhs = commutator(2.0 * f, -1.0 * g, 3.0 * h)
    rhs = -6.0 * commutator(f, g, h)
    assert (lhs - rhs).l2_norm() < 1e-12 * max(rhs.l2_norm(), 1.0)


def test_commutator_matches_definition():
    grid = TorusGrid(dim=3, mode_cutoff=2, padding_factor=6)
    rng = np.random.default_rng(9)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    h = random_field(grid, rng)
    direct = commutator(f, g, h)
    oracle = (brute_paraproduct(brute_paraproduct(f, g, "greater"), h, "resonant")
              - multiply_fields(g, brute_paraproduct(f, h, "resonant")))
    assert (direct - oracle).l2_norm() < 1e-10 * max(oracle.l2_norm(), 1.0)
