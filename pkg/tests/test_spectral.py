import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kraichnan_bouss.spectral import (
    DivergenceError,
    Grid,
    MeanNotZeroError,
    SpectralField,
    biot_savart,
    curl,
    dealias,
    divergence,
    divergence_residual,
    gradient,
    inner_product,
    laplacian,
    lp_norm,
    nonlinear_transport,
    read_snapshot,
    sobolev_norm,
    vector,
    write_snapshot,
)


def random_field(grid, seed, mean_zero=True):
    rng = np.random.default_rng(seed)
    f = SpectralField.from_physical(grid, rng.standard_normal((grid.N, grid.N)))
    c = f.coeffs.copy()
    if mean_zero:
        c[0, 0] = 0
    return SpectralField(grid, c)


def smooth_field(grid, seed=0):
    """Band-limited, mean-zero, no Nyquist content."""
    f = random_field(grid, seed)
    return dealias(f)


class TestGrid:
    def test_rejects_odd_or_small(self):
        with pytest.raises(ValueError):
            Grid(63)
        with pytest.raises(ValueError):
            Grid(4)
        with pytest.raises(ValueError):
            Grid(16, L=0.0)

    def test_wavenumbers(self):
        g = Grid(16, L=4 * math.pi)
        assert g.dk == pytest.approx(0.5)
        k1, _ = g.k
        assert k1[1, 0] == pytest.approx(0.5)
        assert k1[-1, 0] == pytest.approx(-0.5)
        # Nyquist is dropped from derivatives only
        assert g.k_deriv[0][8, 0] == 0 and k1[8, 0] != 0

    def test_dealias_mask_two_thirds(self):
        g = Grid(64)
        n1, n2 = g.mode_index
        keep = (np.abs(n1) <= 21) & (np.abs(n2) <= 21)
        assert np.array_equal(g.dealias_mask, keep)
        assert g.dealias_radius == pytest.approx(21.0)


class TestTransforms:
    @pytest.mark.parametrize("N", [64, 128])
    def test_round_trip(self, N):
        g = Grid(N)
        v = np.random.default_rng(1).standard_normal((N, N))
        back = SpectralField.from_physical(g, v).physical()
        assert np.max(np.abs(back - v)) <= 1e-12 * np.max(np.abs(v))

    @pytest.mark.parametrize("N", [64, 128])
    def test_parseval(self, N):
        g = Grid(N, L=3.0)
        f = random_field(g, 2, mean_zero=False)
        direct = np.sum(f.physical() ** 2) * g.dx**2
        assert sobolev_norm(f, 0.0) ** 2 == pytest.approx(direct, rel=1e-12)

    def test_reality(self):
        f = random_field(Grid(32), 3)
        assert f.is_real()
        assert not SpectralField(f.grid, 1j * np.ones((32, 32))).is_real()

    def test_coefficients_read_only(self):
        f = random_field(Grid(16), 0)
        with pytest.raises(ValueError):
            f.coeffs[1, 1] = 0

    def test_shape_check(self):
        with pytest.raises(ValueError):
            SpectralField(Grid(16), np.zeros((8, 8)))


class TestOperators:
    def test_single_mode_derivatives(self):
        g = Grid(32)
        x1, x2 = g.x
        f = SpectralField.from_physical(g, np.sin(3 * x1) * np.cos(2 * x2))
        gr = gradient(f).physical()
        assert np.allclose(gr[0], 3 * np.cos(3 * x1) * np.cos(2 * x2), atol=1e-12)
        assert np.allclose(gr[1], -2 * np.sin(3 * x1) * np.sin(2 * x2), atol=1e-12)
        assert np.allclose(laplacian(f).physical(), -13 * f.physical(), atol=1e-11)

    def test_curl_grad_and_div_curl_vanish(self):
        g = Grid(32)
        f = smooth_field(g, 4)
        assert np.abs(curl(gradient(f)).coeffs).max() < 1e-12
        assert np.abs(divergence(biot_savart(f)).coeffs).max() < 1e-12

    @pytest.mark.parametrize("N", [64, 128])
    def test_curl_biot_savart_identity(self, N):
        g = Grid(N, L=5.0)
        w = smooth_field(g, 5)
        back = curl(biot_savart(w))
        assert np.abs(back.coeffs - w.coeffs).max() <= 1e-12 * np.abs(w.coeffs).max()
        assert divergence_residual(biot_savart(w)) < 1e-12

    def test_biot_savart_shear(self):
        # omega = sin(x2) -> u = (cos(x2), 0), whose curl is -d2 u1 = sin(x2)
        g = Grid(32)
        x1, x2 = g.x
        u = biot_savart(SpectralField.from_physical(g, np.sin(x2))).physical()
        assert np.allclose(u[0], np.cos(x2), atol=1e-13)
        assert np.allclose(u[1], 0, atol=1e-13)

    def test_biot_savart_rejects_mean(self):
        g = Grid(16)
        with pytest.raises(MeanNotZeroError):
            biot_savart(SpectralField.from_physical(g, np.ones((16, 16))))

    def test_dealias_idempotent(self):
        f = random_field(Grid(32), 6)
        once = dealias(f)
        assert np.array_equal(dealias(once).coeffs, once.coeffs)


class TestNorms:
    def test_sobolev_single_mode(self):
        # ||cos(3 x1)||^2_{H^s} = 2 pi^2 * 9^s on the 2 pi torus
        g = Grid(32)
        x1, _ = g.x
        f = SpectralField.from_physical(g, np.cos(3 * x1))
        for s in (-1.0, -0.25, 0.0, 1.0, 2.0):
            assert sobolev_norm(f, s) ** 2 == pytest.approx(2 * math.pi**2 * 9.0**s, rel=1e-12)

    def test_sobolev_range_and_mean(self):
        g = Grid(16)
        with pytest.raises(ValueError):
            sobolev_norm(random_field(g, 0), 2.5)
        with pytest.raises(MeanNotZeroError):
            sobolev_norm(SpectralField.from_physical(g, np.ones((16, 16))), -1.0)

    def test_lp_norms(self):
        g = Grid(64)
        x1, _ = g.x
        f = SpectralField.from_physical(g, np.sin(x1))
        assert lp_norm(f, 2) == pytest.approx(math.sqrt(2) * math.pi, rel=1e-12)
        assert lp_norm(f, 1) == pytest.approx(8 * math.pi, rel=1e-3)
        assert lp_norm(f, np.inf) == pytest.approx(1.0, rel=1e-3)
        with pytest.raises(ValueError):
            lp_norm(f, 0.5)

    def test_lp_vector_magnitude(self):
        g = Grid(32)
        one = SpectralField.from_physical(g, np.full((32, 32), 3.0))
        four = SpectralField.from_physical(g, np.full((32, 32), 4.0))
        assert lp_norm(vector(one, four), np.inf) == pytest.approx(5.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), s=st.floats(-1, 2), t=st.floats(-1, 2))
    def test_sobolev_monotone_in_index_for_unit_modes(self, seed, s, t):
        # with all |k| >= 1, the H^s norm grows with s
        f = random_field(Grid(16), seed)
        lo, hi = min(s, t), max(s, t)
        assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_inner_product_cauchy_schwarz(self, seed):
        g = Grid(16)
        f, h = random_field(g, seed), random_field(g, seed + 1)
        assert abs(inner_product(f, h)) <= sobolev_norm(f, 0) * sobolev_norm(h, 0) * (1 + 1e-12)


class TestTransport:
    def test_shear_self_advection_vanishes(self):
        g = Grid(32)
        x1, x2 = g.x
        w = SpectralField.from_physical(g, np.sin(x2))
        assert np.abs(nonlinear_transport(biot_savart(w), w).coeffs).max() < 1e-15

    def test_forms_agree(self):
        g = Grid(64)
        w = smooth_field(g, 7)
        u = biot_savart(w)
        a = nonlinear_transport(u, w, "advective")
        b = nonlinear_transport(u, w, "curl-div")
        assert np.abs(a.coeffs - b.coeffs).max() < 1e-12 * np.abs(a.coeffs).max()

    def test_energy_conserving(self):
        # <w, D(u . grad w)> = 0 for band-limited w
        g = Grid(64)
        w = smooth_field(g, 8)
        t = nonlinear_transport(biot_savart(w), w)
        assert abs(inner_product(w, t)) < 1e-12 * sobolev_norm(w, 0) ** 2 * np.abs(g.k2).max()

    def test_rejects_compressible(self):
        g = Grid(16)
        f = random_field(g, 9)
        with pytest.raises(DivergenceError):
            nonlinear_transport(gradient(f), f)
        with pytest.raises(ValueError):
            nonlinear_transport(f, f)


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        g = Grid(16, L=2.5)
        f = random_field(g, 10)
        p = write_snapshot(tmp_path / "w.bin", f, "omega", 0.25)
        back, meta = read_snapshot(p)
        assert np.allclose(back.coeffs, f.coeffs, atol=1e-15)
        assert meta["time"] == 0.25 and meta["L"] == 2.5 and meta["name"] == "omega"
        assert p.stat().st_size == 16 * 16 * 8
