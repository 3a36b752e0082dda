"""IMEX time stepping of the noisy Boussinesq vorticity / temperature system.

    d omega + u . grad omega dt + dV . grad omega = (nu_x + c/2) Lap omega dt + d_1 theta dt
    d theta + u . grad theta dt = kappa Lap theta dt

with u the Biot-Savart velocity of omega.  Diffusion is inverted exactly in
Fourier space; transport, buoyancy and noise are explicit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DiagnosticsTrace, compute_record
from .noise import NoiseSpectrum, NoiseIncrement, aggregated_gaussian, increment_from_gaussian, sample_increment
from .spectral import Grid, SpectralField, _require_mean_zero, _to_phys, _to_spec, lp_norm, sobolev_norm

__all__ = [
    "BlowUpError",
    "SimState",
    "SchemeConfig",
    "step",
    "step_ito_em",
    "step_strat_heun",
    "noise_update",
    "run",
    "coupled_run",
    "lockstep_run",
    "DifferenceTrace",
]

MODES = ("ito-em", "strat-heun")


class BlowUpError(FloatingPointError):
    def __init__(self, step_index: int, t: float, path_id: int | None = None):
        self.step_index = step_index
        self.t = t
        self.path_id = path_id
        where = "" if path_id is None else f" on path {path_id}"
        super().__init__(f"non-finite field at step {step_index} (t = {t:.6g}){where}; reduce dt")


@dataclass(frozen=True)
class SimState:
    omega: SpectralField
    theta: SpectralField
    t: float = 0.0

    def __post_init__(self):
        if self.omega.grid != self.theta.grid:
            raise ValueError("omega and theta live on different grids")
        _require_mean_zero(self.omega, "SimState.omega")
        _require_mean_zero(self.theta, "SimState.theta")

    @property
    def grid(self) -> Grid:
        return self.omega.grid

    @classmethod
    def zero(cls, grid: Grid) -> "SimState":
        return cls(grid.zeros(), grid.zeros(), 0.0)


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    T: float
    noise: NoiseSpectrum
    mode: str = "ito-em"
    extra_viscosity: float = 0.0
    dealias: bool = True
    record_every: int = 1
    kappa: float = 1.0
    p_list: tuple = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"scheme.dt must be positive, got {self.dt}")
        if not self.T >= self.dt:
            raise ValueError(f"scheme.T must be >= dt, got T={self.T}, dt={self.dt}")
        if abs(self.n_steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"scheme.T = {self.T} is not a whole number of steps of dt = {self.dt}")
        if self.mode not in MODES:
            raise ValueError(f"scheme.mode must be one of {MODES}, got {self.mode!r}")
        if self.extra_viscosity < 0:
            raise ValueError(f"scheme.extra_viscosity must be >= 0, got {self.extra_viscosity}")
        if not self.kappa > 0:
            raise ValueError(f"scheme.kappa must be positive, got {self.kappa}")
        if int(self.record_every) < 1:
            raise ValueError("scheme.record_every must be >= 1")
        if self.kappa != 1.0:
            warnings.warn("kappa != 1: the temperature estimates are only established for unit diffusivity", stacklevel=3)

    @property
    def grid(self) -> Grid:
        return self.noise.grid

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def nu(self) -> float:
        """Implicit vorticity viscosity: extra part plus the Ito correction, in Ito mode."""
        if self.mode == "ito-em":
            return self.extra_viscosity + 0.5 * self.noise.c_num
        return self.extra_viscosity

    def with_(self, **changes) -> "SchemeConfig":
        return replace(self, **changes)


def _mask(cfg: SchemeConfig):
    g = cfg.grid
    return g.dealias_mask if cfg.dealias else np.ones((g.N, g.N), dtype=bool)


def _grad_phys(c: np.ndarray, g: Grid, mask) -> np.ndarray:
    k1, k2 = g.k_deriv
    cm = c * mask
    return _to_phys(np.stack([1j * k1 * cm, 1j * k2 * cm]), g.N)


def _dot_spec(a: np.ndarray, b: np.ndarray, g: Grid, mask) -> np.ndarray:
    out = _to_spec(a[0] * b[0] + a[1] * b[1], g.N) * mask
    out[0, 0] = 0.0
    return out


def _velocity_phys(omega_c: np.ndarray, g: Grid, mask) -> np.ndarray:
    k1, k2 = g.k_deriv
    psi = omega_c * g.inv_k2 * mask
    return _to_phys(np.stack([1j * k2 * psi, -1j * k1 * psi]), g.N)


def _check_finite(*arrays, step_index=0, t=0.0):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise BlowUpError(step_index, t)


def _check_increment(cfg: SchemeConfig, inc: NoiseIncrement):
    if abs(inc.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ValueError(f"increment dt {inc.dt} does not match scheme dt {cfg.dt}")
    if inc.field.grid != cfg.grid:
        raise ValueError("increment lives on a different grid")


def _drift_parts(state: SimState, cfg: SchemeConfig, mask):
    """Physical grad omega, the explicit omega drift without noise, and the explicit theta update."""
    g = cfg.grid
    dt = cfg.dt
    w = state.omega.coeffs
    th = state.theta.coeffs
    u = _velocity_phys(w, g, mask)
    gw = _grad_phys(w, g, mask)
    gth = _grad_phys(th, g, mask)
    k1 = g.k_deriv[0]
    w_expl = w - dt * _dot_spec(u, gw, g, mask) + dt * 1j * k1 * th
    th_expl = th - dt * _dot_spec(u, gth, g, mask)
    return gw, w_expl, th_expl


def _finish(state, cfg, w_rhs, th_rhs, nu, step_index):
    g = cfg.grid
    dt = cfg.dt
    w_new = w_rhs / (1.0 + dt * nu * g.k2)
    th_new = th_rhs / (1.0 + dt * cfg.kappa * g.k2)
    w_new[0, 0] = 0.0
    th_new[0, 0] = 0.0
    t_new = state.t + dt
    _check_finite(w_new, th_new, step_index=step_index, t=t_new)
    return SimState(SpectralField(g, w_new), SpectralField(g, th_new), t_new)


def noise_update(omega: SpectralField, V: SpectralField, cfg: SchemeConfig) -> SpectralField:
    """Ito noise part of one step in isolation: (I - dt nu Lap)^-1 [omega - D(V . grad omega)].

    ``cfg.extra_viscosity`` should be 0 to isolate the noise contribution."""
    g = cfg.grid
    mask = _mask(cfg)
    gw = _grad_phys(omega.coeffs, g, mask)
    rhs = omega.coeffs - _dot_spec(_to_phys(V.coeffs, g.N), gw, g, mask)
    out = rhs / (1.0 + cfg.dt * cfg.nu * g.k2)
    out[0, 0] = 0.0
    return SpectralField(g, out)


def step_ito_em(state: SimState, cfg: SchemeConfig, increment: NoiseIncrement, step_index: int = 0) -> SimState:
    """One implicit-diffusion Euler-Maruyama step with the Ito correction c_num/2 in the viscosity."""
    _check_increment(cfg, increment)
    g = cfg.grid
    mask = _mask(cfg)
    gw, w_rhs, th_rhs = _drift_parts(state, cfg, mask)
    if not cfg.noise.is_empty:
        w_rhs = w_rhs - _dot_spec(_to_phys(increment.field.coeffs, g.N), gw, g, mask)
    nu = cfg.extra_viscosity + 0.5 * cfg.noise.c_num
    return _finish(state, cfg, w_rhs, th_rhs, nu, step_index)


def step_strat_heun(state: SimState, cfg: SchemeConfig, increment: NoiseIncrement, step_index: int = 0) -> SimState:
    """Heun treatment of the Stratonovich transport noise: predictor
    w~ = w - D(V . grad w), then the average of V . grad w and V . grad w~.
    No correction viscosity; the second-order term of the predictor supplies it."""
    _check_increment(cfg, increment)
    g = cfg.grid
    mask = _mask(cfg)
    gw, w_rhs, th_rhs = _drift_parts(state, cfg, mask)
    if not cfg.noise.is_empty:
        V = _to_phys(increment.field.coeffs, g.N)
        tv = _dot_spec(V, gw, g, mask)
        w_pred = state.omega.coeffs - tv
        tv_pred = _dot_spec(V, _grad_phys(w_pred, g, mask), g, mask)
        w_rhs = w_rhs - 0.5 * (tv + tv_pred)
    return _finish(state, cfg, w_rhs, th_rhs, cfg.extra_viscosity, step_index)


def step(state: SimState, cfg: SchemeConfig, increment: NoiseIncrement, step_index: int = 0) -> SimState:
    stepper = step_ito_em if cfg.mode == "ito-em" else step_strat_heun
    # overflow is reported as BlowUpError, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return stepper(state, cfg, increment, step_index)


def _zero_increment(cfg: SchemeConfig, step_index: int, path_id: int) -> NoiseIncrement:
    return NoiseIncrement(cfg.grid.zeros(2), cfg.dt, step_index, path_id)


def run(
    init: SimState,
    cfg: SchemeConfig,
    seed: int = 0,
    path_id: int = 0,
    substeps: int = 1,
    observer=None,
) -> tuple[SimState, DiagnosticsTrace]:
    """Advance ``init`` to T, recording diagnostics every ``record_every`` steps and at T.

    ``substeps = m`` draws each step's Gaussian as the normalized sum of m
    fine-level draws, so a run at dt shares its Brownian path with a run at dt/m.
    ``observer(step_index, state)`` is called at each record.
    """
    if init.grid != cfg.grid:
        raise ValueError("initial state and noise spectrum live on different grids")
    alpha = cfg.noise.alpha
    trace = DiagnosticsTrace(alpha=alpha)
    state = init
    n = cfg.n_steps
    every = int(cfg.record_every)

    def record(i, s):
        trace.append(compute_record(s.t, s.omega, s.theta, alpha, cfg.p_list))
        if observer is not None:
            observer(i, s)

    record(0, state)
    for i in range(n):
        if cfg.noise.is_empty:
            inc = _zero_increment(cfg, i, path_id)
        else:
            inc = sample_increment(cfg.noise, cfg.dt, path_id, i, seed, substeps)
        try:
            state = step(state, cfg, inc, i)
        except BlowUpError as exc:
            raise BlowUpError(exc.step_index, exc.t, path_id) from None
        if (i + 1) % every == 0 or i + 1 == n:
            record(i + 1, state)
    return state, trace


@dataclass
class DifferenceTrace:
    """Cross-run difference norms at the recorded times."""

    t: list = field(default_factory=list)
    h_minus1_omega: list = field(default_factory=list)
    h_minus1_theta: list = field(default_factory=list)
    l2_theta: list = field(default_factory=list)
    grad_l1_lp_theta: list = field(default_factory=list)

    columns = ("t", "h_minus1_omega", "h_minus1_theta", "l2_theta", "grad_l1_lp_theta", "int_grad_l1_lp_theta")

    def add(self, t, s1: SimState, s2: SimState, p: float):
        from .spectral import gradient

        dw = s1.omega - s2.omega
        dth = s1.theta - s2.theta
        gd = gradient(dth)
        self.t.append(float(t))
        self.h_minus1_omega.append(sobolev_norm(dw, -1.0))
        self.h_minus1_theta.append(sobolev_norm(dth, -1.0))
        self.l2_theta.append(sobolev_norm(dth, 0.0))
        self.grad_l1_lp_theta.append(lp_norm(gd, 1) + lp_norm(gd, p))

    @property
    def integral_grad_theta(self) -> np.ndarray:
        from .diagnostics import trapezoid_cumulative

        return trapezoid_cumulative(np.asarray(self.t), np.asarray(self.grad_l1_lp_theta))

    def sup(self, name: str) -> float:
        return float(np.max(getattr(self, name)))

    def rows(self):
        integ = self.integral_grad_theta
        return [
            [self.t[i], self.h_minus1_omega[i], self.h_minus1_theta[i], self.l2_theta[i], self.grad_l1_lp_theta[i], integ[i]]
            for i in range(len(self.t))
        ]


def lockstep_run(inits, cfgs, seed: int = 0, path_id: int = 0, pairs=None, p: float = 2.0):
    """Advance several configurations under one shared Gaussian per wavevector and step.

    Each configuration turns the shared Gaussian into its own increment through its
    own spectrum, so different cutoffs see the same underlying Brownian motions.
    Returns (final states, traces, {pair: DifferenceTrace}) with differences recorded
    for ``pairs`` (default: consecutive) at the common record times.
    """
    if len(inits) != len(cfgs) or not cfgs:
        raise ValueError("need one initial state per configuration")
    c0 = cfgs[0]
    for c in cfgs[1:]:
        if c.grid != c0.grid:
            raise ValueError("coupled configurations must share the grid")
        if c.dt != c0.dt or c.T != c0.T:
            raise ValueError("coupled configurations must share dt and T")
        if c.record_every != c0.record_every:
            raise ValueError("coupled configurations must share record_every")
    for s in inits:
        if s.grid != c0.grid:
            raise ValueError("initial state lives on a different grid")
    if pairs is None:
        pairs = [(j, j + 1) for j in range(len(cfgs) - 1)]
    g = c0.grid
    states = list(inits)
    traces = [DiagnosticsTrace(alpha=c.noise.alpha) for c in cfgs]
    diffs = {pr: DifferenceTrace() for pr in pairs}

    def record():
        for s, c, tr in zip(states, cfgs, traces):
            tr.append(compute_record(s.t, s.omega, s.theta, c.noise.alpha, c.p_list))
        for (a, b), d in diffs.items():
            d.add(states[a].t, states[a], states[b], p)

    record()
    n = c0.n_steps
    any_noise = any(not c.noise.is_empty for c in cfgs)
    for i in range(n):
        xi = aggregated_gaussian(g, seed, path_id, i) if any_noise else None
        for j, c in enumerate(cfgs):
            if c.noise.is_empty:
                inc = _zero_increment(c, i, path_id)
            else:
                inc = NoiseIncrement(increment_from_gaussian(c.noise, c.dt, xi), c.dt, i, path_id)
            try:
                states[j] = step(states[j], c, inc, i)
            except BlowUpError as exc:
                raise BlowUpError(exc.step_index, exc.t, path_id) from None
        if (i + 1) % c0.record_every == 0 or i + 1 == n:
            record()
    return states, traces, diffs


def coupled_run(init1, init2, cfg1, cfg2, seed: int = 0, path_id: int = 0, p: float = 2.0):
    """Two configurations driven by the same Brownian increments.
    Returns (trace1, trace2, difference trace)."""
    _, traces, diffs = lockstep_run([init1, init2], [cfg1, cfg2], seed, path_id, [(0, 1)], p)
    return traces[0], traces[1], diffs[(0, 1)]
