import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from difftomo.optics import (
    ComplexField2D,
    GridSpec,
    PropagationKernel,
    adjoint_propagate,
    make_kernel,
    propagate,
)

# Desk-like sampling: pitch far above the wavelength, so every grid frequency
# lies inside the propagating band and the propagator is exactly unitary.
K0 = 2.0 * np.pi / 632.8e-9


def random_field(grid, rng):
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return ComplexField2D(grid, vals)


def dft_matrix(n):
    # explicit unitary DFT matrix, independent of np.fft
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n) / np.sqrt(n)


class TestGridSpec:
    def test_shape_and_npix(self):
        g = GridSpec(8, 4, 1e-6)
        assert g.shape == (4, 8)
        assert g.npix == 32

    def test_axes_centered_on_middle_pixel(self):
        g = GridSpec(8, 8, 2e-6)
        x = g.x_axis()
        assert x[4] == 0.0
        assert_allclose(np.diff(x), 2e-6)

    def test_frequency_axes_match_fftfreq(self):
        g = GridSpec(16, 8, 3e-6)
        assert_allclose(g.kx_axis(), 2 * np.pi * np.fft.fftfreq(16, 3e-6))
        assert_allclose(g.ky_axis(), 2 * np.pi * np.fft.fftfreq(8, 3e-6))

    @pytest.mark.parametrize("nx,ny,pitch", [(1, 8, 1e-6), (8, 0, 1e-6), (8, 8, 0.0), (8, 8, -1e-6), (8, 8, np.nan)])
    def test_invalid_grid_rejected(self, nx, ny, pitch):
        with pytest.raises(ValueError):
            GridSpec(nx, ny, pitch)


class TestComplexField2D:
    def test_shape_validated(self):
        g = GridSpec(4, 4, 1e-6)
        with pytest.raises(ValueError):
            ComplexField2D(g, np.zeros((4, 5), dtype=complex))

    def test_nonfinite_rejected(self):
        g = GridSpec(4, 4, 1e-6)
        vals = np.zeros((4, 4), dtype=complex)
        vals[1, 1] = np.nan
        with pytest.raises(ValueError):
            ComplexField2D(g, vals)

    def test_norm_and_intensity(self):
        g = GridSpec(2, 2, 1e-6)
        f = ComplexField2D(g, np.array([[3.0, 0.0], [0.0, 4j]]))
        assert f.norm() == pytest.approx(5.0)
        assert_allclose(f.intensity(), [[9.0, 0.0], [0.0, 16.0]])


class TestMakeKernel:
    def test_matches_scalar_formula(self):
        # brute-force oracle: evaluate the transfer function per frequency pair
        g = GridSpec(8, 8, 16e-6)
        d = 1e-3
        kernel = make_kernel(g, d, K0)
        kx = g.kx_axis()
        ky = g.ky_axis()
        expected = np.zeros(g.shape, dtype=complex)
        for iy in range(8):
            for ix in range(8):
                kz2 = K0**2 - kx[ix] ** 2 - ky[iy] ** 2
                if kz2 >= 0:
                    expected[iy, ix] = cmath.exp(-1j * (K0 - cmath.sqrt(kz2)) * d)
        assert_allclose(kernel.values, expected, rtol=0, atol=1e-15)

    def test_unit_modulus_on_band(self):
        g = GridSpec(16, 16, 16e-6)
        kernel = make_kernel(g, 58e-3, K0)
        assert_allclose(np.abs(kernel.values), 1.0, atol=1e-14)

    def test_evanescent_band_zeroed(self):
        # pitch of a quarter wavelength puts grid corners beyond the band
        lam = 632.8e-9
        g = GridSpec(16, 16, lam / 4)
        k = 2 * np.pi / lam
        kernel = make_kernel(g, 1e-6, k)
        kxx, kyy = np.meshgrid(g.kx_axis(), g.ky_axis())
        evan = kxx**2 + kyy**2 > k**2
        assert evan.any()
        assert np.all(kernel.values[evan] == 0.0)
        assert np.all(kernel.values[~evan] != 0.0)

    def test_zero_distance_is_identity_on_band(self):
        g = GridSpec(8, 8, 16e-6)
        kernel = make_kernel(g, 0.0, K0)
        assert_allclose(kernel.values, 1.0 + 0j, atol=1e-15)

    @pytest.mark.parametrize("d,k", [(np.inf, K0), (np.nan, K0), (1e-3, 0.0), (1e-3, -1.0)])
    def test_invalid_inputs_rejected(self, d, k):
        with pytest.raises(ValueError):
            make_kernel(GridSpec(4, 4, 1e-6), d, k)

    def test_conj_flips_distance(self):
        g = GridSpec(8, 8, 16e-6)
        kernel = make_kernel(g, 2e-3, K0)
        back = kernel.conj()
        assert back.distance == -2e-3
        assert_allclose(back.values, np.conj(kernel.values), atol=0)
        # on a fully propagating grid conj(H(d)) is exactly H(-d)
        assert_allclose(back.values, make_kernel(g, -2e-3, K0).values, atol=1e-15)


class TestPropagate:
    def test_matrix_dft_oracle(self):
        # independent composition: explicit unitary DFT matrices instead of FFTs
        rng = np.random.default_rng(7)
        g = GridSpec(16, 12, 16e-6)
        u = random_field(g, rng)
        kernel = make_kernel(g, 5e-3, K0)
        wy = dft_matrix(12)
        wx = dft_matrix(16)
        spectrum = wy @ u.values @ wx.T
        expected = np.conj(wy).T @ (spectrum * kernel.values) @ np.conj(wx)
        got = propagate(u, kernel)
        assert_allclose(got.values, expected, rtol=0, atol=1e-12 * np.max(np.abs(expected)))

    def test_point_source_spreads_symmetrically(self):
        g = GridSpec(64, 64, 16e-6)
        vals = np.zeros(g.shape, dtype=complex)
        vals[32, 32] = 1.0
        out = propagate(ComplexField2D(g, vals), make_kernel(g, 2e-3, K0)).values
        inten = np.abs(out) ** 2
        # energy leaves the source pixel and stays symmetric about the center
        assert inten[32, 32] < 1.0
        assert_allclose(inten[32, 33], inten[32, 31], atol=1e-15)
        assert_allclose(inten[33, 32], inten[31, 32], atol=1e-15)

    def test_norm_preserved(self):
        rng = np.random.default_rng(0)
        g = GridSpec(32, 32, 16e-6)
        kernel = make_kernel(g, 58e-3, K0)
        for _ in range(20):
            u = random_field(g, rng)
            v = propagate(u, kernel)
            assert abs(v.norm() - u.norm()) <= 1e-10 * u.norm()

    def test_composition_of_distances(self):
        rng = np.random.default_rng(3)
        g = GridSpec(24, 24, 16e-6)
        u = random_field(g, rng)
        one = propagate(propagate(u, make_kernel(g, 1e-3, K0)), make_kernel(g, 2e-3, K0))
        both = propagate(u, make_kernel(g, 3e-3, K0))
        assert_allclose(one.values, both.values, rtol=0, atol=1e-12 * u.norm())

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(4)
        g = GridSpec(16, 16, 16e-6)
        u = random_field(g, rng)
        back = propagate(propagate(u, make_kernel(g, 7e-3, K0)), make_kernel(g, -7e-3, K0))
        assert_allclose(back.values, u.values, rtol=0, atol=1e-12 * u.norm())

    def test_adjoint_identity(self):
        # <P x, y> == <x, P^H y> over 100 random pairs
        rng = np.random.default_rng(11)
        g = GridSpec(16, 16, 16e-6)
        kernel = make_kernel(g, 58e-3, K0)
        for _ in range(100):
            x = random_field(g, rng)
            y = random_field(g, rng)
            lhs = np.vdot(propagate(x, kernel).values, y.values)
            rhs = np.vdot(x.values, adjoint_propagate(y, kernel).values)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_adjoint_equals_conjugated_kernel(self):
        rng = np.random.default_rng(12)
        g = GridSpec(16, 16, 16e-6)
        kernel = make_kernel(g, 58e-3, K0)
        u = random_field(g, rng)
        a = adjoint_propagate(u, kernel)
        b = propagate(u, kernel.conj())
        assert_allclose(a.values, b.values, atol=0)

    def test_grid_mismatch_rejected(self):
        u = ComplexField2D(GridSpec(8, 8, 1e-6), np.ones((8, 8), dtype=complex))
        kernel = make_kernel(GridSpec(8, 8, 2e-6), 1e-3, K0)
        with pytest.raises(ValueError):
            propagate(u, kernel)

    @given(
        a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
        b=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        g = GridSpec(8, 8, 16e-6)
        kernel = make_kernel(g, 3e-3, K0)
        u = random_field(g, rng)
        v = random_field(g, rng)
        combo = ComplexField2D(g, a * u.values + b * v.values)
        lhs = propagate(combo, kernel).values
        rhs = a * propagate(u, kernel).values + b * propagate(v, kernel).values
        scale = max(1.0, np.max(np.abs(rhs)))
        assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * scale)
