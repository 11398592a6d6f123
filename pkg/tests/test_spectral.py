import itertools

import numpy as np
import pytest

from scalefield.spectral import (TorusGrid, SpectralField, GridError,
                                 forward_transform, inverse_transform,
                                 multiply_fields, apply_multiplier)


def random_field(grid, rng, band=None, scale=1.0):
    """Random real field: Hermitian coefficients on the cube."""
    band = grid.mode_cutoff if band is None else band
    f = SpectralField.zeros(grid, band)
    orb = TorusGrid(grid.dim, 2 * band + 1, band).orbit_index()
    flat = f.coeffs.reshape(-1)
    z = rng.standard_normal(orb.rep.size) + 1j * rng.standard_normal(orb.rep.size)
    flat[orb.rep] = scale * z
    flat[orb.conj] = scale * z.conj()
    flat[orb.zero] = scale * rng.standard_normal()
    return f


@pytest.fixture
def grid():
    return TorusGrid(dim=3, modes_per_axis=16, mode_cutoff=4)


def test_grid_invariants():
    with pytest.raises(GridError):
        TorusGrid(dim=3, modes_per_axis=8, mode_cutoff=4)  # M < 2N+1
    with pytest.raises(GridError):
        TorusGrid(dim=4, mode_cutoff=2)
    g = TorusGrid(dim=3, mode_cutoff=4, padding_factor=4)
    assert g.product_size >= 4 * (2 * 4 + 1)
    assert np.allclose(g.nodes_1d()[:2], [0.0, 2 * np.pi / g.modes_per_axis])


def test_constant_transform(grid):
    vals = np.full((16, 16, 16), 3.25)
    f = forward_transform(grid, vals)
    assert f.coeff((0, 0, 0)) == pytest.approx(3.25)
    off = f.coeffs.copy()
    off[(f.band,) * 3] = 0.0
    assert np.abs(off).max() < 1e-14


def test_single_mode_pair_gives_cosine(grid):
    n = (1, 2, 0)
    f = SpectralField.from_mode_dict(grid, {n: 1.0})
    vals = inverse_transform(f)
    x = grid.nodes_1d()
    X = np.meshgrid(x, x, x, indexing="ij")
    phase = sum(ni * Xi for ni, Xi in zip(n, X))
    assert np.abs(vals - 2.0 * np.cos(phase)).max() < 1e-12


def test_round_trip(grid):
    rng = np.random.default_rng(0)
    f = random_field(grid, rng)
    vals = inverse_transform(f)
    g = forward_transform(grid, vals)
    assert np.abs(g.coeffs - f.coeffs).max() < 1e-12


def test_parseval(grid):
    rng = np.random.default_rng(1)
    f = random_field(grid, rng)
    vals = inverse_transform(f)
    assert np.mean(vals ** 2) == pytest.approx(f.l2_norm() ** 2, rel=1e-12)
    assert np.mean(vals) == pytest.approx(f.integral(), abs=1e-12)


def test_multiply_identity(grid):
    rng = np.random.default_rng(2)
    f = random_field(grid, rng)
    one = SpectralField.constant(grid, 1.0)
    g = multiply_fields(f, one, out_band=f.band)
    assert np.abs(g.coeffs - f.coeffs).max() < 1e-12


def test_multiply_single_modes_add_exponents(grid):
    # complex single modes e^{in.x} multiply to the single mode n+m
    f = SpectralField.zeros(grid, 4)
    g = SpectralField.zeros(grid, 4)
    f.coeffs[(4 + 1, 4, 4)] = 1.0
    g.coeffs[(4 + 2, 4 - 1, 4)] = 1.0
    f.real = g.real = False
    h = multiply_fields(f, g)
    nonzero = np.array(np.nonzero(np.abs(h.coeffs) > 1e-13)).T
    assert nonzero.shape[0] == 1
    assert tuple(nonzero[0] - h.band) == (3, -1, 0)


def brute_force_product_coeff(fields, n):
    """O(N^(3k)) direct convolution oracle for one output coefficient."""
    def conv(a, b):
        ba, bb = (a.shape[0] - 1) // 2, (b.shape[0] - 1) // 2
        bo = ba + bb
        out = np.zeros((2 * bo + 1,) * 3, dtype=complex)
        for i in itertools.product(range(a.shape[0]), repeat=3):
            ai = a[i]
            if ai == 0:
                continue
            sl = tuple(slice(ii, ii + b.shape[0]) for ii in i)
            out[sl] += ai * b
        return out
    acc = fields[0].coeffs
    for f in fields[1:]:
        acc = conv(acc, f.coeffs)
    bo = (acc.shape[0] - 1) // 2
    return acc[tuple(c + bo for c in n)]


def test_quartic_product_matches_convolution_oracle():
    grid = TorusGrid(dim=3, mode_cutoff=2, padding_factor=4)
    rng = np.random.default_rng(3)
    fs = [random_field(grid, rng) for _ in range(4)]
    prod = multiply_fields(*fs)
    for n in [(0, 0, 0), (1, -2, 0), (3, 3, 3), (-5, 1, 2)]:
        oracle = brute_force_product_coeff(fs, n)
        assert prod.coeff(n) == pytest.approx(oracle, rel=1e-10, abs=1e-10)


def test_dealias_padding_error():
    grid = TorusGrid(dim=3, mode_cutoff=2, padding_factor=2)
    rng = np.random.default_rng(4)
    fs = [random_field(grid, rng) for _ in range(4)]
    with pytest.raises(GridError):
        multiply_fields(*fs)
    aliased = multiply_fields(*fs, dealias=False)
    assert aliased.aliased


def test_multiplier_linearity_and_symmetry(grid):
    rng = np.random.default_rng(5)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    sym = lambda modes: 1.0 / (1.0 + (modes ** 2).sum(axis=0))
    lhs = apply_multiplier(sym, 2.0 * f + (-3.0) * g)
    rhs = 2.0 * apply_multiplier(sym, f) + (-3.0) * apply_multiplier(sym, g)
    assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-12
    assert apply_multiplier(sym, f).is_hermitian()


def test_grid_mismatch_errors(grid):
    other = TorusGrid(dim=3, mode_cutoff=3)
    rng = np.random.default_rng(6)
    f = random_field(grid, rng)
    g = random_field(other, rng)
    with pytest.raises(GridError):
        multiply_fields(f, g)


def test_hermitian_preserved_by_products(grid):
    rng = np.random.default_rng(7)
    f = random_field(grid, rng)
    g = random_field(grid, rng)
    h = multiply_fields(f, g)
    assert h.is_hermitian()
    assert np.abs(h.values(h.grid.product_size).imag).max() if not h.real else True


def test_truncate_roundtrip(grid):
    rng = np.random.default_rng(8)
    f = random_field(grid, rng)
    wide = f.truncate(7)
    assert wide.band == 7
    back = wide.truncate(4)
    assert np.abs(back.coeffs - f.coeffs).max() == 0.0
