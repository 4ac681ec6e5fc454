"""DST-based Poisson solver against independent dense oracles.

The primary oracle assembles the 5-point Laplacian with Dirichlet boundaries
as an explicit sparse matrix and solves it with scipy's general sparse LU —
a completely different algorithm from the spectral path under test.
"""

import numpy as np
import pytest

from _oracles import dense_poisson_solve
from tactiforce.errors import DomainError
from tactiforce.fields import DepthMap, NormalMap
from tactiforce.gel import (
    GelConfig,
    Indenter,
    Sphere,
    indent_depth,
    normals_from_depth,
)
from tactiforce.poisson import (
    depth_from_normals,
    divergence,
    dst1_direct,
    dst1_fft,
    gradients_from_normals,
    idst1_direct,
    idst1_fft,
    max_depth,
    solve_poisson,
)


class TestSineTransform:
    def test_direct_matches_fft(self, rng):
        for n in (3, 8, 17, 33):
            x = rng.normal(size=(5, n))
            np.testing.assert_allclose(
                dst1_direct(x, axis=1), dst1_fft(x, axis=1), atol=1e-10
            )

    def test_involution_scaling(self, rng):
        # DST-I applied twice is 2(N+1) times the identity
        x = rng.normal(size=(4, 11))
        twice = dst1_direct(dst1_direct(x, axis=1), axis=1)
        np.testing.assert_allclose(twice, 2 * (11 + 1) * x, atol=1e-10)

    def test_inverse_round_trip(self, rng):
        x = rng.normal(size=(6, 9))
        np.testing.assert_allclose(idst1_fft(dst1_fft(x, axis=1), axis=1), x, atol=1e-12)
        np.testing.assert_allclose(
            idst1_direct(dst1_direct(x, axis=0), axis=0), x, atol=1e-12
        )

    def test_single_sine_mode(self):
        # DST-I of sin(pi k (i+1)/(N+1)) concentrates on bin k-1.
        n = 16
        i = np.arange(n)
        k = 3
        x = np.sin(np.pi * k * (i + 1) / (n + 1))[np.newaxis, :]
        spec = dst1_direct(x, axis=1)[0]
        expected = np.zeros(n)
        expected[k - 1] = n + 1
        np.testing.assert_allclose(spec, expected, atol=1e-10)


class TestSolvePoisson:
    @pytest.mark.parametrize("method", ["fft", "direct"])
    def test_matches_dense_oracle(self, method, rng):
        for _ in range(20):
            rows = int(rng.integers(8, 33))
            cols = int(rng.integers(8, 33))
            h = float(rng.uniform(0.05, 0.5))
            f = rng.normal(size=(rows, cols))
            u = solve_poisson(f, h, method=method)
            expected = dense_poisson_solve(f, h)
            assert np.abs(u - expected).max() < 1e-8

    def test_fft_matches_direct(self, rng):
        f = rng.normal(size=(24, 31))
        np.testing.assert_allclose(
            solve_poisson(f, 0.1, method="fft"),
            solve_poisson(f, 0.1, method="direct"),
            atol=1e-10,
        )

    def test_eigenfunction_exact(self):
        # u = sin(pi p x/Lx) sin(pi q y/Ly) restricted to the grid is an
        # eigenfunction of the DISCRETE Laplacian: forcing it analytically
        # must reproduce u to near machine precision.
        rows, cols = 21, 34
        h = 0.1
        p, q = 3, 2
        i = np.arange(rows)
        j = np.arange(cols)
        sy = np.sin(np.pi * p * i / (rows - 1))
        sx = np.sin(np.pi * q * j / (cols - 1))
        u_true = np.outer(sy, sx)
        # discrete eigenvalue of the 5-point Laplacian for this mode
        lam = (2 * np.cos(np.pi * p / (rows - 1)) - 2) / h**2 + (
            2 * np.cos(np.pi * q / (cols - 1)) - 2
        ) / h**2
        f = lam * u_true
        u = solve_poisson(f, h)
        assert np.abs(u - u_true).max() <= 1e-10

    def test_linearity(self, rng):
        f1 = rng.normal(size=(16, 16))
        f2 = rng.normal(size=(16, 16))
        a, b = 2.5, -1.25
        lhs = solve_poisson(a * f1 + b * f2, 0.1)
        rhs = a * solve_poisson(f1, 0.1) + b * solve_poisson(f2, 0.1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_zero_rhs_gives_zero(self):
        u = solve_poisson(np.zeros((12, 12)), 0.1)
        np.testing.assert_array_equal(u, 0.0)

    def test_boundary_ring_is_zero(self, rng):
        u = solve_poisson(rng.normal(size=(10, 13)), 0.2)
        assert np.abs(u[0, :]).max() == 0.0
        assert np.abs(u[-1, :]).max() == 0.0
        assert np.abs(u[:, 0]).max() == 0.0
        assert np.abs(u[:, -1]).max() == 0.0

    def test_rejects_tiny_grids(self):
        with pytest.raises(DomainError):
            solve_poisson(np.zeros((2, 8)), 0.1)

    def test_rejects_bad_spacing(self):
        with pytest.raises(DomainError):
            solve_poisson(np.zeros((8, 8)), 0.0)

    def test_rejects_unknown_method(self):
        with pytest.raises(DomainError):
            solve_poisson(np.zeros((8, 8)), 0.1, method="magic")


class TestGradientsAndDivergence:
    def test_ramp_normals_recover_slope(self):
        # Normals of a plane z = 0.3 x: G = (nx/nz, ny/nz) = (-0.3, 0)
        n = np.array([-0.3, 0.0, 1.0])
        n = n / np.linalg.norm(n)
        vecs = np.tile(n, (8, 9, 1))
        field = gradients_from_normals(NormalMap(vecs), pixel_pitch=0.1)
        np.testing.assert_allclose(field.gx, -0.3, atol=1e-12)
        np.testing.assert_allclose(field.gy, 0.0, atol=1e-12)

    def test_divergence_of_linear_field_constant(self):
        ys, xs = np.mgrid[0:10, 0:12].astype(float)
        from tactiforce.fields import GradientField

        field = GradientField(gx=0.5 * xs * 0.1, gy=0.25 * ys * 0.1, pixel_pitch=0.1)
        div = divergence(field)
        np.testing.assert_allclose(div, 0.75, atol=1e-12)


class TestDepthRoundTrip:
    def test_sphere_press_round_trip(self):
        # forward: depth -> normals; inverse: normals -> depth.
        gel = GelConfig(width_px=160, height_px=120, pixel_pitch=0.1, smoothing_sigma=2.0)
        ind = Indenter(Sphere(radius=3.0), center=gel.center, press_depth=0.6)
        truth = indent_depth(gel, ind)
        nm = normals_from_depth(truth)
        recon = depth_from_normals(nm, gel.pixel_pitch)
        rms = np.sqrt(np.mean((recon.values - truth.values) ** 2))
        rms_rel = rms / truth.values.max()
        peak_rel = abs(max_depth(recon) - truth.values.max()) / truth.values.max()
        assert rms_rel < 0.05
        assert peak_rel < 0.05

    def test_reconstruction_is_nonnegative(self, rng):
        vecs = rng.normal(size=(20, 20, 3)) * 0.05
        vecs[:, :, 2] = 1.0
        vecs /= np.linalg.norm(vecs, axis=2, keepdims=True)
        recon = depth_from_normals(NormalMap(vecs), pixel_pitch=0.1)
        assert recon.values.min() >= 0.0
        recon.validate()

    def test_max_depth_median_filters_spikes(self):
        values = np.zeros((12, 12))
        values[5:8, 5:8] = 0.4
        values[6, 6] = 3.0  # isolated spike
        dm = DepthMap(values, 0.1)
        assert max_depth(dm, median_filter=True) == pytest.approx(0.4)
        assert max_depth(dm, median_filter=False) == pytest.approx(3.0)
