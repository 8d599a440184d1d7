"""Spectral operator tests: exact examples, oracles, and invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nudgevisc import spectral as sp
from nudgevisc.errors import (
    ContractViolationError,
    IncompatibleGridsError,
    InvalidCutoffError,
    InvalidGridError,
)

from oracles import (
    bilinear_convolution,
    field_modes,
    leray_matrix_apply,
    shear_field,
    single_mode_field,
)

TWO_PI = 2.0 * np.pi


class TestGridCreate:
    @pytest.mark.parametrize("n,cutoff", [(8, 2), (64, 21), (12, 4), (128, 42)])
    def test_dealias_cutoff(self, n, cutoff):
        assert sp.grid_create(n).dealias_cutoff == cutoff

    @pytest.mark.parametrize("n", [7, 6, 0, -8, 9])
    def test_invalid_sizes(self, n):
        with pytest.raises(InvalidGridError):
            sp.grid_create(n)

    def test_lattice_labels(self):
        grid = sp.grid_create(8)
        assert sorted(grid.k1.tolist()) == [-3, -2, -1, 0, 1, 2, 3, 4]

    def test_product_grid_alias_free(self):
        # 3 * cutoff must stay below the product grid size
        for n in (8, 12, 18, 64, 128):
            grid = sp.grid_create(n)
            assert 3 * grid.dealias_cutoff < grid.m_pad


class TestLerayProject:
    def test_annihilates_gradient(self, grid32):
        x = TWO_PI * np.arange(32) / 32
        xx, yy = np.meshgrid(x, x, indexing="ij")
        grad = np.stack((-np.sin(xx) * np.cos(yy), -np.cos(xx) * np.sin(yy)))
        v = sp.from_physical(grid32, grad)
        out = sp.leray_project(v)
        assert out.max_coeff() <= 1e-13 * v.max_coeff()

    def test_idempotent_on_divergence_free(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        again = sp.leray_project(v)
        assert np.max(np.abs(again.coeffs - v.coeffs)) <= 1e-14 * v.max_coeff()

    def test_matches_matrix_formula_on_sin_x(self, grid8):
        # v = (sin x, 0) lives at k = (+-1, 0)
        x = TWO_PI * np.arange(8) / 8
        xx, _ = np.meshgrid(x, x, indexing="ij")
        v = sp.from_physical(grid8, np.stack((np.sin(xx), np.zeros_like(xx))))
        out = sp.leray_project(v)
        expected = {}
        for k, c in field_modes(v).items():
            expected[k] = leray_matrix_apply(k, c)
        for k, c in field_modes(out).items():
            assert np.allclose(c, expected[k], atol=1e-15)
        # and the projection is nontrivial here: k = (1,0) kills the x-component
        assert out.max_coeff() < v.max_coeff() * 0.75

    def test_linear(self, grid32, rng):
        a = sp.random_divergence_free(grid32, rng) + shear_field(grid32)
        b = shear_field(grid32, amplitude=0.3, k2=2)
        lhs = sp.leray_project(a + 2.0 * b)
        rhs = sp.leray_project(a) + 2.0 * sp.leray_project(b)
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) <= 1e-14 * lhs.max_coeff()

    def test_nonzero_mean_rejected(self, grid8):
        c = np.zeros((2, 8, 8), dtype=complex)
        c[0, 0, 0] = 1.0
        v = sp.SpectralField(grid8, c)  # raw constructor skips normalization
        with pytest.raises(ContractViolationError):
            sp.leray_project(v)


class TestStokesApply:
    def test_unit_wavenumber_eigenmode(self, grid8):
        v = shear_field(grid8)
        out = sp.stokes_apply(v, 2.0)
        assert np.max(np.abs(out.coeffs - v.coeffs)) <= 1e-15

    def test_eigenvalue_at_k2(self, grid8):
        v = shear_field(grid8, k2=2)
        out = sp.stokes_apply(v, 2.0)
        assert np.max(np.abs(out.coeffs - 4.0 * v.coeffs)) <= 1e-15

    def test_power_zero_is_identity(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        out = sp.stokes_apply(v, 0.0)
        assert np.array_equal(out.coeffs, v.coeffs)

    def test_negative_power_inverts(self, grid8):
        v = shear_field(grid8, k2=2)
        out = sp.stokes_apply(sp.stokes_apply(v, -2.0), 2.0)
        assert np.max(np.abs(out.coeffs - v.coeffs)) <= 1e-15


class TestBilinear:
    def test_shear_self_advection_vanishes(self, grid8):
        u = shear_field(grid8)
        assert sp.bilinear(u, u).max_coeff() == 0.0

    def test_orthogonality_energy(self, random_field_pair):
        u, v = random_field_pair
        val = sp.inner_hs(sp.bilinear(u, v), v, 0.0)
        assert abs(val) <= 1e-10 * sp.norm_hs(u, 1.0) * sp.norm_hs(v, 1.0) ** 2

    def test_orthogonality_enstrophy(self, random_field_pair):
        u, _ = random_field_pair
        val = sp.inner_hs(sp.bilinear(u, u), sp.stokes_apply(u, 2.0), 0.0)
        assert abs(val) <= 1e-10 * sp.norm_hs(u, 1.0) ** 2 * sp.norm_hs(u, 2.0)

    def test_matches_convolution_oracle(self, grid8, rng):
        for _ in range(5):
            u = sp.random_divergence_free(grid8, rng, amplitude=1.3)
            v = sp.random_divergence_free(grid8, rng, amplitude=0.8)
            fast = sp.bilinear(u, v)
            slow = bilinear_convolution(u, v)
            scale = max(slow.max_coeff(), 1e-300)
            assert np.max(np.abs(fast.coeffs - slow.coeffs)) <= 1e-12 * scale

    def test_two_mode_fixed_fields_against_oracle(self, grid8):
        u = single_mode_field(grid8, (1, 1), np.array([0.3 - 0.1j, -0.3 + 0.1j]))
        u = sp.leray_project(u) + shear_field(grid8, amplitude=0.7)
        v = single_mode_field(grid8, (2, -1), np.array([0.2j, 0.1])) + shear_field(
            grid8, amplitude=-0.4, k2=2
        )
        v = sp.leray_project(v)
        fast = sp.bilinear(u, v)
        slow = bilinear_convolution(u, v)
        assert np.max(np.abs(fast.coeffs - slow.coeffs)) <= 1e-12 * slow.max_coeff()

    def test_result_dealiased_and_divergence_free(self, random_field_pair):
        u, v = random_field_pair
        out = sp.bilinear(u, v)
        grid = out.grid
        beyond = ~grid.dealias_mask
        assert np.max(np.abs(out.coeffs[:, beyond])) == 0.0
        assert sp.divergence_max(out) <= 1e-12 * max(out.max_coeff(), 1e-300)

    def test_grid_mismatch(self, grid8, grid32):
        with pytest.raises(IncompatibleGridsError):
            sp.bilinear(shear_field(grid8), shear_field(grid32))

    @given(a=st.floats(-4, 4).filter(lambda x: abs(x) > 1e-3),
           b=st.floats(-4, 4).filter(lambda x: abs(x) > 1e-3))
    @settings(max_examples=20, deadline=None)
    def test_bilinearity_scaling(self, a, b):
        grid = sp.grid_create(16)
        gen = np.random.default_rng(7)
        u = sp.random_divergence_free(grid, gen, amplitude=1.0)
        v = sp.random_divergence_free(grid, gen, amplitude=1.0)
        ref = sp.bilinear(u, v)
        scaled = sp.bilinear(a * u, b * v)
        assert np.max(np.abs(scaled.coeffs - a * b * ref.coeffs)) <= 1e-12 * max(
            abs(a * b) * ref.max_coeff(), 1e-300
        )


class TestLowpass:
    def test_keeps_low_mode(self, grid8):
        v = shear_field(grid8)
        out = sp.lowpass(v, 2)
        assert np.array_equal(out.coeffs, v.coeffs)

    def test_kills_high_mode(self, grid32):
        v = shear_field(grid32, k2=3)
        assert sp.lowpass(v, 2).max_coeff() == 0.0

    def test_euclidean_ball_not_square(self, grid32):
        # |k| = sqrt(8) > 2 for k = (2, 2), so N = 2 must drop it
        v = sp.leray_project(
            single_mode_field(grid32, (2, 2), np.array([0.5, -0.5 + 0.2j]))
        )
        assert sp.lowpass(v, 2).max_coeff() == 0.0
        assert sp.lowpass(v, 3).max_coeff() > 0.0

    def test_idempotent(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        once = sp.lowpass(v, 4)
        twice = sp.lowpass(once, 4)
        assert np.array_equal(once.coeffs, twice.coeffs)

    def test_invalid_cutoffs(self, grid8):
        v = shear_field(grid8)
        for bad in (0, 3, -1):
            with pytest.raises(InvalidCutoffError):
                sp.lowpass(v, bad)

    def test_decomposition_exact_and_orthogonal(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        low = sp.lowpass(v, 5)
        high = sp.highpass(v, 5)
        assert np.array_equal((low + high).coeffs, v.coeffs)
        for s in (0.0, 1.0, 2.5):
            assert abs(sp.inner_hs(low, high, s)) == 0.0

    def test_commutes_with_diagonal_operators(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        a = sp.lowpass(sp.stokes_apply(v, 1.5), 4)
        b = sp.stokes_apply(sp.lowpass(v, 4), 1.5)
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-15
        c = sp.lowpass(sp.leray_project(v), 4)
        d = sp.leray_project(sp.lowpass(v, 4))
        assert np.max(np.abs(c.coeffs - d.coeffs)) <= 1e-15


class TestNorms:
    def test_shear_closed_form(self, grid8):
        v = shear_field(grid8)
        assert sp.norm_hs(v, 0.0) == pytest.approx(math.sqrt(2.0) * math.pi, rel=1e-14)
        assert sp.norm_hs(v, 1.0) == pytest.approx(math.sqrt(2.0) * math.pi, rel=1e-14)

    def test_zero_field(self, grid8):
        z = sp.zero_field(grid8)
        for s in (-1.0, 0.0, 1.0, 2.0):
            assert sp.norm_hs(z, s) == 0.0

    def test_poincare(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        for s in (0.5, 1.0, 2.0):
            assert sp.norm_hs(v, 0.0) <= sp.norm_hs(v, s) * (1 + 1e-14)

    def test_norm_equivalence_inhomogeneous(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        for s in (0.0, 1.0, 2.0):
            hom = sp.norm_hs(v, s) ** 2
            inhom = sp.PLANCHEREL * float(
                np.sum(
                    (1.0 + v.grid.k2) ** s
                    * (np.abs(v.coeffs[0]) ** 2 + np.abs(v.coeffs[1]) ** 2)
                )
            )
            assert hom <= inhom * (1 + 1e-12)
            assert inhom <= 2.0**s * hom * (1 + 1e-12)

    def test_plancherel_roundtrip(self, grid64, rng):
        v = sp.random_divergence_free(grid64, rng, amplitude=2.0, decay=0.3)
        phys = sp.to_physical(v)
        back = sp.from_physical(grid64, phys)
        assert np.max(np.abs(back.coeffs - v.coeffs)) <= 1e-12 * v.max_coeff()
        phys2 = sp.to_physical(back)
        assert np.max(np.abs(phys2 - phys)) <= 1e-12 * np.max(np.abs(phys))

    def test_l2_equals_discrete_quadrature(self, grid64, rng):
        v = sp.random_divergence_free(grid64, rng, amplitude=1.7, decay=0.3)
        phys = sp.to_physical(v)
        dx = TWO_PI / grid64.n
        quad = math.sqrt(float(np.sum(phys**2)) * dx * dx)
        assert quad == pytest.approx(sp.norm_hs(v, 0.0), rel=1e-10)


class TestInnerHS:
    def test_self_inner_is_norm_squared(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        assert sp.inner_hs(v, v, 0.0) == pytest.approx(sp.norm_hs(v, 0.0) ** 2, rel=1e-13)

    def test_orthogonal_single_modes(self, grid8):
        u = shear_field(grid8, k2=1)
        v = shear_field(grid8, k2=2)
        assert sp.inner_hs(u, v, 0.0) == 0.0

    def test_closed_form_h1_pairing(self, grid8):
        a = -2.25
        u = shear_field(grid8)
        v = shear_field(grid8, amplitude=a)
        assert sp.inner_hs(u, v, 1.0) == pytest.approx(a * 2.0 * math.pi**2, rel=1e-14)

    def test_symmetry(self, random_field_pair):
        u, v = random_field_pair
        assert sp.inner_hs(u, v, 1.0) == pytest.approx(sp.inner_hs(v, u, 1.0), rel=1e-13)

    def test_grid_mismatch(self, grid8, grid32):
        with pytest.raises(IncompatibleGridsError):
            sp.inner_hs(shear_field(grid8), shear_field(grid32), 0.0)


class TestFieldBasics:
    def test_conjugate_symmetry_and_real_samples(self, grid32, rng):
        v = sp.random_divergence_free(grid32, rng)
        herm = sp._hermitianize(v.coeffs)
        assert np.max(np.abs(herm - v.coeffs)) <= 1e-15 * v.max_coeff()

    def test_mean_zero_enforced(self, grid8, rng):
        samples = rng.standard_normal((2, 8, 8)) + 3.0  # nonzero mean
        v = sp.from_physical(grid8, samples)
        assert np.all(v.coeffs[:, 0, 0] == 0.0)

    def test_coeffs_read_only(self, grid8):
        v = shear_field(grid8)
        with pytest.raises(ValueError):
            v.coeffs[0, 0, 1] = 1.0

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_random_fields_satisfy_invariants(self, seed):
        grid = sp.grid_create(16)
        v = sp.random_divergence_free(grid, np.random.default_rng(seed))
        assert np.all(v.coeffs[:, 0, 0] == 0.0)
        assert sp.divergence_max(v) <= 1e-12 * v.max_coeff()
        assert sp.norm_hs(v, 0.0) == pytest.approx(1.0, rel=1e-12)
