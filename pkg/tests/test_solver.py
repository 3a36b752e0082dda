import math

import numpy as np
import pytest

from kraichnan_bouss.initial_data import builtin_profile
from kraichnan_bouss.noise import NoiseIncrement, NoiseSpectrum, build_spectrum, sample_increment
from kraichnan_bouss.solver import (
    BlowUpError,
    SchemeConfig,
    SimState,
    coupled_run,
    lockstep_run,
    run,
    step_ito_em,
    step_strat_heun,
)
from kraichnan_bouss.spectral import Grid, SpectralField, sobolev_norm


def empty(g):
    return build_spectrum(0.25, 0.0, g).with_scale(0.0)


def smooth_state(g, amp=1.0):
    return SimState(builtin_profile("gaussian-vortex-pair", g, amplitude=amp), builtin_profile("checkerboard-temperature", g, amplitude=amp))


class TestConfig:
    def test_validation(self):
        sp = empty(Grid(16))
        with pytest.raises(ValueError):
            SchemeConfig(0.0, 1.0, sp)
        with pytest.raises(ValueError):
            SchemeConfig(0.1, 0.05, sp)
        with pytest.raises(ValueError):
            SchemeConfig(0.1, 0.25, sp)
        with pytest.raises(ValueError):
            SchemeConfig(0.1, 1.0, sp, mode="rk4")
        with pytest.raises(ValueError):
            SchemeConfig(0.1, 1.0, sp, extra_viscosity=-1)

    def test_kappa_warns(self):
        with pytest.warns(UserWarning, match="kappa"):
            SchemeConfig(0.1, 1.0, empty(Grid(16)), kappa=2.0)

    def test_state_rejects_mean(self):
        g = Grid(16)
        with pytest.raises(ValueError):
            SimState(SpectralField.from_physical(g, np.ones((16, 16))), g.zeros())


class TestDeterministic:
    def test_zero_state_stays_zero(self):
        g = Grid(16)
        s, _ = run(SimState.zero(g), SchemeConfig(0.01, 0.1, build_spectrum(0.25, 0.0, g)))
        assert not np.any(s.omega.coeffs) and not np.any(s.theta.coeffs)

    def test_one_step_hand_oracle(self):
        # w0 = 0, th0 = sin x1: w+ = dt cos x1 / (1 + dt nu), th+ = sin x1 / (1 + dt)
        g = Grid(32)
        x1, _ = g.x
        dt, nu = 1e-2, 0.3
        cfg = SchemeConfig(dt, dt, empty(g), extra_viscosity=nu)
        s, tr = run(SimState(g.zeros(), SpectralField.from_physical(g, np.sin(x1))), cfg)
        assert len(tr) == 2
        assert np.abs(s.omega.physical() - dt * np.cos(x1) / (1 + dt * nu)).max() < 1e-12
        assert np.abs(s.theta.physical() - np.sin(x1) / (1 + dt)).max() < 1e-12

    def test_shear_stationary(self):
        g = Grid(32)
        x1, x2 = g.x
        w = SpectralField.from_physical(g, np.sin(x2))
        s, _ = run(SimState(w, g.zeros()), SchemeConfig(0.01, 1.0, empty(g)))
        assert np.abs(s.omega.coeffs - w.coeffs).max() < 1e-12

    def test_pure_heat(self):
        g = Grid(32)
        x1, _ = g.x
        s, _ = run(SimState(g.zeros(), SpectralField.from_physical(g, np.sin(x1))), SchemeConfig(1e-3, 0.1, empty(g)))
        exact = math.exp(-0.1) * np.sin(x1)
        assert np.abs(s.theta.physical() - exact).max() / math.exp(-0.1) < 1e-4

    def test_heun_equals_ito_without_noise(self):
        g = Grid(32)
        sp = build_spectrum(0.25, 0.0, g)
        st = smooth_state(g)
        zero = NoiseIncrement(g.zeros(2), 0.01, 0, 0)
        ito = SchemeConfig(0.01, 0.01, sp.with_c_num(0.0), extra_viscosity=0.05)
        strat = ito.with_(mode="strat-heun")
        a = step_ito_em(st, ito, zero)
        b = step_strat_heun(st, strat, zero)
        assert np.abs(a.omega.coeffs - b.omega.coeffs).max() < 1e-12
        # and with c_num present, Ito is Heun with the viscosity raised by c_num/2
        c = step_ito_em(st, ito.with_(noise=sp), zero)
        d = step_strat_heun(st, strat.with_(extra_viscosity=0.05 + sp.c_num / 2), zero)
        assert np.abs(c.omega.coeffs - d.omega.coeffs).max() < 1e-12


def one_mode_spectrum(g, a2):
    w = np.zeros((g.N, g.N))
    w[1, 0] = w[-1, 0] = a2
    return NoiseSpectrum(0.25, 0.0, g, 1.0, w, 0.5 * w.sum())


class TestNoiseSteps:
    def test_heun_single_mode_closed_form(self):
        # modes (+-1, 0) with xi = 1 give V = (0, 2 s sin x1), s = sqrt(dt a^2)
        g = Grid(16)
        x1, x2 = g.x
        dt, a2 = 1e-2, 0.3
        sp = one_mode_spectrum(g, a2)
        from kraichnan_bouss.noise import increment_from_gaussian

        xi = np.zeros((16, 16), complex)
        xi[1, 0] = xi[-1, 0] = 1.0
        V = increment_from_gaussian(sp, dt, xi)
        s = math.sqrt(dt * a2)
        assert np.allclose(V.physical()[1], 2 * s * np.sin(x1), atol=1e-14)
        w = SpectralField.from_physical(g, np.cos(x2))
        cfg = SchemeConfig(dt, dt, sp, mode="strat-heun")
        out = step_strat_heun(SimState(w, g.zeros()), cfg, NoiseIncrement(V, dt, 0, 0))
        expect = np.cos(x2) + 2 * s * np.sin(x1) * np.sin(x2) - 2 * s**2 * np.sin(x1) ** 2 * np.cos(x2)
        expect -= expect.mean()
        assert np.abs(out.omega.physical() - expect).max() < 1e-12
        # Ito: the explicit term once, then the c_num/2 viscosity
        cfg = cfg.with_(mode="ito-em")
        out = step_ito_em(SimState(w, g.zeros()), cfg, NoiseIncrement(V, dt, 0, 0))
        raw = SpectralField.from_physical(g, np.cos(x2) + 2 * s * np.sin(x1) * np.sin(x2))
        expect = raw.coeffs / (1 + dt * 0.5 * sp.c_num * g.k2)
        assert np.abs(out.omega.coeffs - expect).max() < 1e-14

    def test_increment_mismatch(self):
        g = Grid(16)
        sp = build_spectrum(0.25, 0.0, g)
        cfg = SchemeConfig(0.01, 0.01, sp)
        inc = sample_increment(sp, 0.02, 0, 0, 0)
        with pytest.raises(ValueError):
            step_ito_em(SimState.zero(g), cfg, inc)

    def test_mean_zero_every_step(self):
        g = Grid(32)
        cfg = SchemeConfig(0.01, 0.1, build_spectrum(0.25, 0.0, g), record_every=1)
        seen = []
        run(smooth_state(g), cfg, 1, 0, observer=lambda i, s: seen.append((s.omega.mean, s.theta.mean)))
        assert all(a == 0 and b == 0 for a, b in seen)

    def test_l2_expectation_not_growing(self):
        # Stratonovich transport conserves ||w||; the Ito scheme should not inflate it on average
        g = Grid(32)
        cfg = SchemeConfig(0.005, 0.1, build_spectrum(0.25, 0.25, g))
        w0 = builtin_profile("gaussian-vortex-pair", g)
        finals = [sobolev_norm(run(SimState(w0, g.zeros()), cfg, 0, j)[0].omega, 0) ** 2 for j in range(6)]
        assert np.mean(finals) <= sobolev_norm(w0, 0) ** 2 * 1.001


class TestRun:
    def test_deterministic(self):
        g = Grid(32)
        cfg = SchemeConfig(0.01, 0.05, build_spectrum(0.25, 0.0, g))
        _, a = run(smooth_state(g), cfg, 5, 2)
        _, b = run(smooth_state(g), cfg, 5, 2)
        _, c = run(smooth_state(g), cfg, 5, 3)
        assert a.rows == b.rows
        assert a.rows != c.rows

    def test_record_schedule(self):
        g = Grid(16)
        cfg = SchemeConfig(0.01, 0.1, empty(g), record_every=3)
        _, tr = run(smooth_state(g), cfg)
        assert np.allclose(tr.t, [0.0, 0.03, 0.06, 0.09, 0.1])

    def test_substeps_share_path(self):
        # one coarse step with substeps=2 uses the sum of two fine Gaussians
        g = Grid(16)
        sp = build_spectrum(0.25, 0.0, g)
        a = sample_increment(sp, 0.02, 0, 0, 1, substeps=2).field.coeffs
        f1 = sample_increment(sp, 0.01, 0, 0, 1).field.coeffs
        f2 = sample_increment(sp, 0.01, 0, 1, 1).field.coeffs
        assert np.allclose(a, f1 + f2)

    def test_blow_up(self):
        g = Grid(32)
        sp = build_spectrum(0.25, 0.0, g).with_scale(50.0)
        cfg = SchemeConfig(0.05, 20.0, sp, mode="strat-heun")
        with pytest.raises(BlowUpError) as exc:
            run(smooth_state(g, 5.0), cfg, 0, 4)
        assert exc.value.path_id == 4


class TestCoupled:
    def test_identical_configs_zero_difference(self):
        g = Grid(32)
        cfg = SchemeConfig(0.01, 0.05, build_spectrum(0.25, 0.0, g))
        _, _, d = coupled_run(smooth_state(g), smooth_state(g), cfg, cfg, 3, 0)
        assert max(d.h_minus1_omega) == 0 and max(d.h_minus1_theta) == 0

    def test_perturbation_stays_bounded(self):
        g = Grid(32)
        cfg = SchemeConfig(0.01, 0.2, build_spectrum(0.25, 0.0, g))
        s1 = smooth_state(g)
        s2 = SimState(s1.omega + builtin_profile("random-lp", g, amplitude=1e-6), s1.theta)
        _, _, d = coupled_run(s1, s2, cfg, cfg)
        assert np.all(np.isfinite(d.h_minus1_omega))
        assert max(d.h_minus1_omega) < 1e-4

    def test_lockstep_matches_separate_runs(self):
        # shared Gaussians: each member of a lockstep run equals its own solo run
        g = Grid(32)
        c1 = SchemeConfig(0.01, 0.05, build_spectrum(0.25, 0.25, g))
        c2 = c1.with_(noise=build_spectrum(0.25, 0.125, g))
        states, _, _ = lockstep_run([smooth_state(g)] * 2, [c1, c2], 2, 1)
        solo, _ = run(smooth_state(g), c2, 2, 1)
        assert np.array_equal(states[1].omega.coeffs, solo.omega.coeffs)

    def test_grid_mismatch(self):
        c1 = SchemeConfig(0.01, 0.05, empty(Grid(16)))
        c2 = SchemeConfig(0.01, 0.05, empty(Grid(32)))
        with pytest.raises(ValueError):
            coupled_run(SimState.zero(Grid(16)), SimState.zero(Grid(32)), c1, c2)
