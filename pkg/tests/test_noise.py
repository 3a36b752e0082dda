import math

import mpmath as mp
import numpy as np
import pytest

from kraichnan_bouss.noise import (
    aggregated_gaussian,
    build_spectrum,
    continuum_correction,
    empirical_covariance,
    gaussian_coefficients,
    increment_from_gaussian,
    lattice_covariance,
    sample_increment,
)
from kraichnan_bouss.spectral import Grid, divergence_residual


def polar_oracle(alpha, delta):
    """(1/2) * integral over the disc of radius 1/delta of <xi>^-(2+2 alpha), in polar form."""
    mp.mp.dps = 30
    R = 1 / mp.mpf(delta)
    val = mp.quad(lambda r, phi: r * (1 + r * r) ** (-1 - mp.mpf(alpha)), [0, 1, R], [0, 2 * mp.pi])
    return float(val / 2)


class TestCorrectionConstant:
    @pytest.mark.parametrize("alpha", [0.1, 0.25, 0.4])
    @pytest.mark.parametrize("delta", [0.5, 0.1, 0.02])
    def test_matches_quadrature(self, alpha, delta):
        assert continuum_correction(alpha, delta) == pytest.approx(polar_oracle(alpha, delta), rel=1e-8)

    def test_known_value(self):
        assert continuum_correction(0.4, 0.1) == pytest.approx(3.3071, abs=1e-4)

    def test_unmollified_limit(self):
        # pi/(2a) - c_delta = pi/(2a) (1 + delta^-2)^-a exactly
        for a in (0.1, 0.25, 0.4):
            for d in (0.1, 1e-3, 1e-6):
                gap = math.pi / (2 * a) - continuum_correction(a, d)
                assert gap == pytest.approx(math.pi / (2 * a) * (1 + d**-2) ** -a, rel=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            continuum_correction(1.0, 0.1)
        with pytest.raises(ValueError):
            continuum_correction(0.3, 0.0)


class TestSpectrum:
    def test_covariance_isotropic(self):
        sp = build_spectrum(0.25, 0.1, Grid(64))
        Q = sp.covariance_at_zero()
        assert np.allclose(Q, sp.c_num * np.eye(2), rtol=1e-13, atol=1e-14)
        assert sp.c_num == pytest.approx(0.5 * sp.weights.sum())

    def test_support(self):
        g = Grid(64)
        sp = build_spectrum(0.25, 0.125, g)
        active = sp.weights > 0
        assert np.all(g.kmag[active] <= 8 + 1e-9)
        assert sp.weights[0, 0] == 0
        # delta = 0 and tiny delta clip to the dealiased disc
        assert build_spectrum(0.25, 0.0, g).cutoff == g.dealias_radius
        assert build_spectrum(0.25, 1e-6, g).cutoff == g.dealias_radius

    def test_rejects_bad_parameters(self):
        g = Grid(16)
        for a in (0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                build_spectrum(a, 0.1, g)
        with pytest.raises(ValueError):
            build_spectrum(0.3, -0.1, g)

    def test_lattice_tracks_continuum_under_joint_refinement(self):
        # at fixed delta the Riemann sum converges when both N and L grow
        errs = []
        for N, L in ((32, 2 * math.pi), (64, 4 * math.pi), (128, 8 * math.pi)):
            sp = build_spectrum(0.25, 0.2, Grid(N, L))
            errs.append(abs(sp.c_num / continuum_correction(0.25, 0.2) - 1))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.02

    def test_fault_copies(self):
        sp = build_spectrum(0.25, 0.0, Grid(16))
        assert sp.with_c_num(1.0).c_num == 1.0
        assert np.array_equal(sp.with_c_num(1.0).weights, sp.weights)
        assert sp.with_scale(0.0).is_empty

    def test_export_table(self, tmp_path):
        sp = build_spectrum(0.25, 0.5, Grid(16))
        rows = np.loadtxt(sp.export_table(tmp_path / "s.csv"), delimiter=",", skiprows=1)
        assert rows.shape == (int((sp.weights > 0).sum()), 3)
        assert rows[:, 2].sum() == pytest.approx(2 * sp.c_num)


class TestSampling:
    def test_gaussians_hermitian(self):
        g = Grid(16)
        xi = gaussian_coefficients(g, 3, 0, 0)
        flipped = np.roll(np.flip(xi, axis=(0, 1)), 1, axis=(0, 1))
        assert np.allclose(xi, np.conj(flipped))

    def test_reproducible_and_distinct(self):
        g = Grid(16)
        a = gaussian_coefficients(g, 1, 2, 3)
        assert np.array_equal(a, gaussian_coefficients(g, 1, 2, 3))
        assert not np.allclose(a, gaussian_coefficients(g, 1, 2, 4))
        assert not np.allclose(a, gaussian_coefficients(g, 1, 3, 3))
        assert not np.allclose(a, gaussian_coefficients(g, 2, 2, 3))

    def test_substep_aggregation(self):
        g = Grid(16)
        agg = aggregated_gaussian(g, 0, 0, 1, substeps=2)
        direct = (gaussian_coefficients(g, 0, 0, 2) + gaussian_coefficients(g, 0, 0, 3)) / math.sqrt(2)
        assert np.allclose(agg, direct)

    def test_increment_real_divergence_free(self):
        sp = build_spectrum(0.25, 0.0, Grid(32))
        inc = sample_increment(sp, 1e-2, 0, 0, 7)
        assert inc.field.is_real()
        assert divergence_residual(inc.field) < 1e-14
        assert np.all(inc.field.mean == 0)
        with pytest.raises(ValueError):
            sample_increment(sp, 0.0, 0, 0, 7)

    def test_cutoffs_share_gaussians(self):
        g = Grid(64)
        coarse = build_spectrum(0.25, 1 / 8, g)
        fine = build_spectrum(0.25, 1 / 16, g)
        xi = gaussian_coefficients(g, 0, 0, 0)
        a = increment_from_gaussian(coarse, 0.01, xi).coeffs
        b = increment_from_gaussian(fine, 0.01, xi).coeffs
        common = coarse.weights > 0
        assert np.array_equal(a[:, common], b[:, common])
        assert np.all(a[:, ~common] == 0)

    def test_empirical_covariance_small(self):
        sp = build_spectrum(0.25, 0.25, Grid(16))
        mean, se = empirical_covariance(sp, 0.5, 2000, seed=1)
        z = np.abs(mean - sp.c_num * np.eye(2)) / se
        assert np.all(z <= 3.5)
        with pytest.raises(ValueError):
            empirical_covariance(sp, 0.5, 10)

    def test_lattice_covariance_at_zero_lag(self):
        sp = build_spectrum(0.25, 0.25, Grid(16))
        assert np.allclose(lattice_covariance(sp, (0.0, 0.0)), sp.covariance_at_zero())
