"""Mollified, truncated initial data and the built-in test profiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import (
    Grid,
    SpectralField,
    _require_mean_zero,
    biot_savart,
    curl,
    read_snapshot,
)

__all__ = [
    "InitialDataSpec",
    "bump",
    "mollifier",
    "cutoff_function",
    "convolve",
    "mollify_vorticity",
    "mollify_temperature",
    "check_relabel_condition",
    "builtin_profile",
    "PROFILES",
    "build_initial_field",
]


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump(r):
    """Radial bump: 1 on r <= 1/2, smooth decay on (1/2, 1), 0 for r >= 1."""
    return 1.0 - _smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0)


def _periodic_distance(grid: Grid, center) -> np.ndarray:
    x1, x2 = grid.x
    d1 = np.abs(x1 - center[0])
    d2 = np.abs(x2 - center[1])
    d1 = np.minimum(d1, grid.L - d1)
    d2 = np.minimum(d2, grid.L - d2)
    return np.hypot(d1, d2)


def mollifier(grid: Grid, delta: float) -> np.ndarray:
    """rho_delta = delta^-2 rho(x/delta) sampled around the origin, normalized so the
    grid integral is exactly 1."""
    r = _periodic_distance(grid, (0.0, 0.0)) / delta
    rho = bump(r)
    return rho / (rho.sum() * grid.dx**2)


def cutoff_function(grid: Grid, delta: float, center=None) -> np.ndarray:
    """chi_delta(x) = chi(delta * |x - center|), center defaulting to the domain middle."""
    if center is None:
        center = (grid.L / 2, grid.L / 2)
    return bump(delta * _periodic_distance(grid, center))


def convolve(f: SpectralField, kernel_values: np.ndarray) -> SpectralField:
    """f * kernel, evaluated spectrally from the sampled kernel."""
    g = f.grid
    khat = SpectralField.from_physical(g, kernel_values).coeffs
    return SpectralField(g, f.coeffs * khat * g.area)


def _check_delta(delta):
    if not delta > 0:
        raise ValueError(f"mollification delta must be positive, got {delta}")


def _truncated_curl(v: SpectralField, delta: float, center) -> SpectralField:
    chi = cutoff_function(v.grid, delta, center)
    return curl(SpectralField.from_physical(v.grid, v.physical() * chi))


def mollify_vorticity(omega0: SpectralField, delta: float, center=None) -> SpectralField:
    """curl((u0 * rho_delta) chi_delta) with u0 the Biot-Savart velocity of omega0."""
    _check_delta(delta)
    _require_mean_zero(omega0, "mollify_vorticity")
    u = convolve(biot_savart(omega0), mollifier(omega0.grid, delta))
    return _truncated_curl(u, delta, center)


def mollify_temperature(theta0: SpectralField, delta: float, center=None) -> SpectralField:
    """curl((theta0 * K * rho_delta) chi_delta)."""
    _check_delta(delta)
    _require_mean_zero(theta0, "mollify_temperature")
    v = convolve(biot_savart(theta0), mollifier(theta0.grid, delta))
    return _truncated_curl(v, delta, center)


def check_relabel_condition(sequence, alpha: float) -> list:
    """Longest subsequence of (delta, omega0_delta) pairs along which
    delta^alpha ||omega0_delta||_{L2}^2 strictly decreases (earliest on ties)."""
    seq = list(sequence)
    deltas = [d for d, _ in seq]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    if not seq:
        return []
    from .spectral import sobolev_norm

    q = [d**alpha * sobolev_norm(f, 0.0) ** 2 for d, f in seq]
    n = len(q)
    best = [1] * n
    prev = [-1] * n
    for i in range(n):
        for j in range(i):
            if q[j] > q[i] and best[j] + 1 > best[i]:
                best[i] = best[j] + 1
                prev[i] = j
    i = max(range(n), key=lambda t: (best[t], -t))
    chain = []
    while i >= 0:
        chain.append(seq[i])
        i = prev[i]
    return chain[::-1]


def _gaussian_vortex_pair(grid: Grid, amplitude=1.0, width=None, separation=None, **_):
    width = grid.L / 16 if width is None else width
    separation = grid.L / 4 if separation is None else separation
    c = grid.L / 2
    out = np.zeros((grid.N, grid.N))
    for sign, x0 in ((1.0, c - separation / 2), (-1.0, c + separation / 2)):
        r = _periodic_distance(grid, (x0, c))
        out += sign * np.exp(-0.5 * (r / width) ** 2)
    return amplitude * out


def _shear_band(grid: Grid, amplitude=1.0, mode=1, **_):
    x1, x2 = grid.x
    return amplitude * np.sin(mode * grid.dk * x2)


def _checkerboard(grid: Grid, amplitude=1.0, mode=1, **_):
    x1, x2 = grid.x
    return amplitude * np.sin(mode * grid.dk * x1) * np.sin(mode * grid.dk * x2)


def _random_lp(grid: Grid, amplitude=1.0, slope=1.0, kmin=1.0, kmax=None, seed=0, **_):
    """Gaussian field with |f_hat(k)| ~ |k|^-slope on kmin <= |k| <= kmax, scaled to L2 norm
    ``amplitude``.  A shallow slope piles up small-scale content."""
    kmax = grid.dealias_radius if kmax is None else kmax
    rng = np.random.default_rng(seed)
    white = SpectralField.from_physical(grid, rng.standard_normal((grid.N, grid.N)))
    kmag = grid.kmag
    band = (kmag >= kmin) & (kmag <= kmax) & grid.dealias_mask
    filt = np.zeros_like(kmag)
    filt[band] = kmag[band] ** (-slope)
    c = white.coeffs * filt
    norm = np.sqrt(grid.area * np.sum(np.abs(c) ** 2))
    return SpectralField(grid, c * (amplitude / norm)).physical()


PROFILES = {
    "gaussian-vortex-pair": _gaussian_vortex_pair,
    "shear-band": _shear_band,
    "random-lp": _random_lp,
    "checkerboard-temperature": _checkerboard,
}


def builtin_profile(name: str, grid: Grid, **params) -> SpectralField:
    try:
        make = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    f = SpectralField.from_physical(grid, make(grid, **params))
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return SpectralField(grid, c)


@dataclass
class InitialDataSpec:
    profile: str
    params: dict = field(default_factory=dict)
    delta: float | None = None
    target: str = "vorticity"
    rescale: float = 1.0

    def __post_init__(self):
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ValueError(f"mollification delta must lie in (0, 1], got {self.delta}")
        if self.target not in ("vorticity", "temperature"):
            raise ValueError(f"target must be 'vorticity' or 'temperature', got {self.target!r}")


def build_initial_field(spec: InitialDataSpec, grid: Grid) -> SpectralField:
    """Profile (named or snapshot path) -> optional mollification -> rescale."""
    if spec.profile in ("zero", "none"):
        return grid.zeros()
    if spec.profile in PROFILES:
        f = builtin_profile(spec.profile, grid, **spec.params)
    else:
        f, meta = read_snapshot(Path(spec.profile))
        if meta["N"] != grid.N or meta["L"] != grid.L:
            raise ValueError(f"snapshot {spec.profile} is on a different grid")
        c = f.coeffs.copy()
        c[0, 0] = 0.0
        f = SpectralField(grid, c)
    if spec.delta is not None:
        mollify = mollify_vorticity if spec.target == "vorticity" else mollify_temperature
        f = mollify(f, spec.delta)
    return f * spec.rescale
