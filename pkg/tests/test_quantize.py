"""DFT conventions, multipliers, Kohn-Nirenberg reductions, loss operator,
and weighted Sobolev norms."""

import numpy as np
import pytest

from singhyp.quantize import (GridSpec, OverflowGuardError, SobolevIndex, SpectralField,
                              apply_kn, apply_multiplier, dft_forward, dft_inverse, l2_norm,
                              loss_operator, loss_symbol, sobolev_norm)
from singhyp.structure import bracket, constant_pair, poly_pair
from singhyp.analysis import random_trig_poly


@pytest.fixture
def grid():
    return GridSpec(L=np.pi, N=128, k=1.0)


@pytest.fixture
def rand_field(grid):
    rng = np.random.default_rng(5)
    return rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)


class TestGridSpec:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            GridSpec(L=1.0, N=100)

    def test_rejects_small_k(self):
        with pytest.raises(ValueError):
            GridSpec(L=1.0, N=16, k=0.5)

    def test_frequency_layout(self, grid):
        assert grid.xi[0] == 0.0
        assert grid.xi[1] == pytest.approx(np.pi / grid.L)
        # Nyquist mode carries the negative frequency -N/2
        assert grid.xi[grid.N // 2] == pytest.approx(-(np.pi / grid.L) * (grid.N // 2))


class TestDft:
    def test_constant_field_single_coefficient(self, grid):
        c = dft_forward(grid, np.ones(grid.N))
        assert abs(c[0] - 2.0 * grid.L) <= 1e-12
        assert np.max(np.abs(c[1:])) <= 1e-12

    def test_single_mode_coefficient(self, grid):
        c = dft_forward(grid, np.exp(1j * 7 * grid.x))
        assert abs(c[7] - 2.0 * grid.L) <= 1e-12 * 2.0 * grid.L
        mask = np.ones(grid.N, dtype=bool)
        mask[7] = False
        assert np.max(np.abs(c[mask])) <= 1e-13 * 2.0 * grid.L

    def test_roundtrip_identity(self, grid, rand_field):
        back = dft_inverse(grid, dft_forward(grid, rand_field))
        assert np.max(np.abs(back - rand_field)) <= 1e-13 * np.max(np.abs(rand_field))

    def test_parseval(self, grid, rand_field):
        c = dft_forward(grid, rand_field)
        lhs = grid.dx * np.sum(np.abs(rand_field) ** 2)
        rhs = np.sum(np.abs(c) ** 2) / (2.0 * grid.L)
        assert abs(lhs - rhs) <= 1e-12 * lhs

    def test_size_mismatch(self, grid):
        with pytest.raises(ValueError):
            dft_forward(grid, np.ones(grid.N + 1))


class TestMultiplier:
    def test_identity(self, grid, rand_field):
        out = apply_multiplier(grid, lambda xi: np.ones_like(xi), rand_field)
        assert np.max(np.abs(out - rand_field)) <= 1e-13 * np.max(np.abs(rand_field))

    def test_eigenfunction(self, grid):
        u = np.exp(1j * 5 * grid.x)
        out = apply_multiplier(grid, lambda xi: bracket(xi, grid.k) ** 2, u)
        assert np.allclose(out, (grid.k ** 2 + 25.0) * u, rtol=1e-12)

    def test_derivative_matches_finite_difference(self, grid):
        u = np.exp(np.cos(grid.x))  # smooth periodic
        spectral = apply_multiplier(grid, lambda xi: 1j * xi, u, zero_nyquist=True)
        fd = (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * grid.dx)
        # centered difference is O(dx^2); spectral is exact for this bandwidth
        assert np.max(np.abs(spectral.real - fd)) <= 0.7 * grid.dx ** 2 * np.max(np.abs(u))
        exact = -np.sin(grid.x) * u
        assert np.max(np.abs(spectral - exact)) <= 1e-11

    def test_multipliers_compose(self, grid, rand_field):
        m1 = lambda xi: 1.0 / bracket(xi, 2.0)
        m2 = lambda xi: bracket(xi, 2.0) ** 2 + 0j
        seq = apply_multiplier(grid, m1, apply_multiplier(grid, m2, rand_field))
        joint = apply_multiplier(grid, lambda xi: m1(xi) * m2(xi), rand_field)
        assert np.max(np.abs(seq - joint)) <= 1e-12 * np.max(np.abs(joint))

    def test_overflow_guard(self, grid, rand_field):
        with np.errstate(over="ignore"), pytest.raises(OverflowGuardError):
            apply_multiplier(grid, lambda xi: np.exp(20.0 * bracket(xi, 1.0)), rand_field)


class TestKohnNirenberg:
    def test_reduces_to_multiplier(self, grid, rand_field):
        m = lambda xi: bracket(xi, 1.0) ** 1.5 + 0j
        kn = apply_kn(grid, lambda x, xi: m(xi) + 0.0 * x, rand_field)
        ref = apply_multiplier(grid, m, rand_field)
        assert np.max(np.abs(kn - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_reduces_to_multiplication(self, grid, rand_field):
        g = lambda x: 2.0 + np.sin(x)
        kn = apply_kn(grid, lambda x, xi: g(x) + 0.0 * xi, rand_field)
        ref = g(grid.x) * rand_field
        assert np.max(np.abs(kn - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_product_symbol_orders_multiplier_first(self, grid, rand_field):
        g = lambda x: np.cos(x)
        m = lambda xi: (1j * xi) ** 2
        kn = apply_kn(grid, lambda x, xi: g(x) * m(xi), rand_field)
        ref = g(grid.x) * apply_multiplier(grid, m, rand_field)
        assert np.max(np.abs(kn - ref)) <= 1e-12 * max(np.max(np.abs(ref)), 1.0)

    def test_linearity(self, grid):
        rng = np.random.default_rng(9)
        u = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        v = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        sym = lambda x, xi: np.cos(x) * bracket(xi, 1.0)
        lhs = apply_kn(grid, sym, 2.0 * u + 3j * v)
        rhs = 2.0 * apply_kn(grid, sym, u) + 3j * apply_kn(grid, sym, v)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_unit_symbol_is_identity(self, grid, rand_field):
        out = apply_kn(grid, lambda x, xi: 1.0 + 0.0 * x + 0.0 * xi, rand_field)
        assert np.max(np.abs(out - rand_field)) <= 1e-12 * np.max(np.abs(rand_field))


class TestLossOperator:
    def test_eps_zero_identity(self, grid, rand_field):
        out = loss_operator(grid, poly_pair(0.5, 0.5), 0.0, 3.0, rand_field)
        assert np.max(np.abs(out - rand_field)) <= 1e-13 * np.max(np.abs(rand_field))

    def test_constant_pair_reduces_to_multiplier(self, grid, rand_field):
        out = loss_operator(grid, constant_pair(), 0.3, 3.0, rand_field)
        ref = apply_multiplier(grid, np.exp(0.3 * bracket(grid.xi, grid.k) ** (1.0 / 3.0)),
                               rand_field)
        assert np.max(np.abs(out - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_small_eps_derivative_oracle(self, grid):
        # (L(eps)u - u)/eps -> Op((Phi <xi>)^(1/sigma)) u, Richardson-checked
        pair = poly_pair(0.5, 0.5)
        u = np.asarray(random_trig_poly(8, seed=1)(grid.x), dtype=complex)
        theta = apply_kn(grid, (loss_symbol(grid, pair, 1.0, 3.0)), u)  # linear symbol
        scale = l2_norm(grid, theta)

        def ratio(eps):
            return (loss_operator(grid, pair, eps, 3.0, u) - u) / eps

        err4 = l2_norm(grid, ratio(1e-4) - theta) / scale
        err5 = l2_norm(grid, ratio(1e-5) - theta) / scale
        rich = (10.0 * ratio(1e-5) - ratio(1e-4)) / 9.0
        err_rich = l2_norm(grid, rich - theta) / scale
        assert err5 < err4 < 1e-2
        assert err_rich < err4 / 5.0

    def test_overflow_guard_names_exponent(self, grid, rand_field):
        with pytest.raises(OverflowGuardError, match="exponent"):
            loss_operator(grid, poly_pair(0.5, 0.5), 500.0, 3.0, rand_field)

    def test_invertibility_improves_with_k(self):
        pair = poly_pair(0.5, 0.5)
        band = random_trig_poly(8, seed=3)
        errs = {}
        for k in (4.0, 64.0):
            gk = GridSpec(L=np.pi, N=128, k=k)
            u = np.asarray(band(gk.x), dtype=complex)
            fwd = loss_operator(gk, pair, 0.4, 3.0, u)
            back = apply_kn(gk, np.exp(-loss_symbol(gk, pair, 0.4, 3.0)), fwd)
            errs[k] = l2_norm(gk, back - u) / l2_norm(gk, u)
        assert errs[64.0] < errs[4.0]


class TestSobolevNorm:
    def test_reduces_to_l2(self, grid, rand_field):
        idx = SobolevIndex(0.0, 0.0, 0.0, 3.0, grid.k)
        assert sobolev_norm(grid, rand_field, idx, poly_pair(0.5, 1.0)) \
            == pytest.approx(l2_norm(grid, rand_field), rel=1e-13)

    def test_single_mode_closed_form(self, grid):
        u = np.exp(1j * 6 * grid.x)
        idx = SobolevIndex(2.0, 0.0, 0.25, 3.0, grid.k)
        expect = np.sqrt(2 * grid.L) * bracket(6.0, grid.k) ** 2 \
            * np.exp(0.25 * bracket(6.0, grid.k) ** (1.0 / 3.0))
        assert sobolev_norm(grid, u, idx, constant_pair()) == pytest.approx(expect, rel=1e-10)

    def test_zero_decay_index_ignores_pair(self, grid, rand_field):
        # s2 = 0, eps = 0: Phi never enters
        idx = SobolevIndex(1.5, 0.0, 0.0, 3.0, grid.k)
        a = sobolev_norm(grid, rand_field, idx, poly_pair(0.5, 1.0))
        b = l2_norm(grid, apply_multiplier(grid, bracket(grid.xi, grid.k) ** 1.5, rand_field))
        assert a == pytest.approx(b, rel=1e-13)

    def test_monotone_in_s1_and_eps(self, grid):
        rng = np.random.default_rng(17)
        pair = poly_pair(0.5, 1.0)
        for _ in range(5):
            u = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
            base = sobolev_norm(grid, u, SobolevIndex(1.0, 0.0, 0.05, 3.0, grid.k), pair)
            up_s = sobolev_norm(grid, u, SobolevIndex(1.5, 0.0, 0.05, 3.0, grid.k), pair)
            up_e = sobolev_norm(grid, u, SobolevIndex(1.0, 0.0, 0.1, 3.0, grid.k), pair)
            assert up_s >= base * (1.0 - 1e-12)
            assert up_e >= base * (1.0 - 1e-12)

    def test_k_mismatch_rejected(self, grid, rand_field):
        with pytest.raises(ValueError):
            sobolev_norm(grid, rand_field, SobolevIndex(0.0, 0.0, 0.0, 3.0, 2.0),
                         constant_pair())


class TestSpectralField:
    def test_cache_consistency(self, grid, rand_field):
        f = SpectralField(grid, rand_field)
        _ = f.spectrum()
        assert f.cache_consistent()
        f.values[:] *= 2.0  # stale cache must be detectable
        assert not f.cache_consistent()
