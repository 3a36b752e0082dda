"""Kraichnan transport noise on the periodic lattice.

The covariance has Fourier density <k>^-(2+2 alpha) (I - k k^T/|k|^2), sharply
cut off at |k| <= 1/delta.  On the torus each wavevector carries one real
Gaussian degree of freedom along k^perp/|k|, weighted by the Riemann-sum amplitude

    a_k^2 = (2 pi / L)^2 <k>^-(2+2 alpha) 1{0 < |k| <= cutoff}

so that Q_N(0) = sum_k a_k^2 e_k e_k^T = c_num I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import Grid, SpectralField

__all__ = [
    "NoiseSpectrum",
    "NoiseIncrement",
    "build_spectrum",
    "continuum_correction",
    "gaussian_coefficients",
    "sample_increment",
    "increment_from_gaussian",
    "empirical_covariance",
    "lattice_covariance",
]


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    alpha: float
    delta: float
    grid: Grid
    cutoff: float
    weights: np.ndarray = field(repr=False)
    c_num: float = 0.0

    def __post_init__(self):
        self.weights.flags.writeable = False

    @property
    def is_empty(self) -> bool:
        return not np.any(self.weights)

    @property
    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        return unit_perp(self.grid)

    def covariance_at_zero(self) -> np.ndarray:
        """Q_N(0) = sum_k a_k^2 e_k (x) e_k."""
        e1, e2 = self.directions
        w = self.weights
        return np.array([[np.sum(w * e1 * e1), np.sum(w * e1 * e2)], [np.sum(w * e2 * e1), np.sum(w * e2 * e2)]])

    def with_scale(self, factor: float) -> "NoiseSpectrum":
        """Same support with every weight multiplied by ``factor`` (used for fault injection)."""
        w = self.weights * factor
        return NoiseSpectrum(self.alpha, self.delta, self.grid, self.cutoff, w, 0.5 * float(w.sum()))

    def with_c_num(self, c_num: float) -> "NoiseSpectrum":
        """Copy with an overridden correction constant; the sampled noise is unchanged."""
        return NoiseSpectrum(self.alpha, self.delta, self.grid, self.cutoff, self.weights.copy(), float(c_num))

    def export_table(self, path) -> Path:
        """Plain-text (k1, k2, a_k^2) table of the active wavevectors."""
        k1, k2 = self.grid.k
        nz = self.weights > 0
        rows = np.column_stack([k1[nz], k2[nz], self.weights[nz]])
        path = Path(path)
        np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="k1,k2,a2", comments="")
        return path


_unit_perp_cache: dict[Grid, tuple[np.ndarray, np.ndarray]] = {}


def unit_perp(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """e_k = k^perp/|k| = (k2, -k1)/|k|, zero at k = 0."""
    if grid not in _unit_perp_cache:
        k1, k2 = grid.k
        mag = grid.kmag
        inv = np.zeros_like(mag)
        inv[mag > 0] = 1.0 / mag[mag > 0]
        _unit_perp_cache[grid] = (k2 * inv, -k1 * inv)
    return _unit_perp_cache[grid]


def build_spectrum(alpha: float, delta: float, grid: Grid) -> NoiseSpectrum:
    """Lattice weights of the mollified Kraichnan covariance.

    ``delta = 0`` means no cutoff beyond the grid's own: the largest disc inside
    the 2/3 dealiasing band.  Any requested cutoff is clipped to that disc so the
    noise never produces modes the solver would discard.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    cutoff = grid.dealias_radius if delta == 0 else min(1.0 / delta, grid.dealias_radius)
    kmag = grid.kmag
    active = (kmag > 0) & (kmag <= cutoff * (1 + 1e-12))
    weights = np.zeros_like(kmag)
    weights[active] = grid.dk**2 * (1.0 + kmag[active] ** 2) ** (-(1.0 + alpha))
    return NoiseSpectrum(float(alpha), float(delta), grid, float(cutoff), weights, 0.5 * float(weights.sum()))


def continuum_correction(alpha: float, delta: float) -> float:
    """c_delta = (1/2) * integral over |xi| <= 1/delta of <xi>^-(2+2 alpha) d xi."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    # 1 - (1 + R^2)^-alpha, written to stay accurate when the bracket is tiny
    return math.pi / (2 * alpha) * -math.expm1(-alpha * math.log1p(delta**-2))


def _generator(seed: int, path_id: int, step_index: int) -> np.random.Generator:
    # Counter-based stream: (path, step) live in the high counter words, which
    # the draws themselves (incrementing word 0) never reach.
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(step_index), int(path_id)]))


def gaussian_coefficients(grid: Grid, seed: int, path_id: int, step_index: int) -> np.ndarray:
    """Hermitian array xi with E|xi_k|^2 = 1 and E[xi_k xi_k] = 0 off the self-conjugate
    modes.  Entry k depends only on the draws at k and -k, so every spectrum on the
    same grid sees the same Gaussian per wavevector."""
    N = grid.N
    z = _generator(seed, path_id, step_index).standard_normal((2, N, N))
    z = (z[0] + 1j * z[1]) / math.sqrt(2.0)
    z_neg = np.roll(np.flip(z, axis=(0, 1)), 1, axis=(0, 1))
    return (z + np.conj(z_neg)) / math.sqrt(2.0)


def aggregated_gaussian(grid: Grid, seed: int, path_id: int, step_index: int, substeps: int = 1) -> np.ndarray:
    """Normalized sum of the ``substeps`` fine-level Gaussians that make up one coarse
    step, so runs at dt and dt/substeps see the same Brownian path."""
    if substeps == 1:
        return gaussian_coefficients(grid, seed, path_id, step_index)
    base = step_index * substeps
    acc = sum(gaussian_coefficients(grid, seed, path_id, base + s) for s in range(substeps))
    return acc / math.sqrt(substeps)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    field: SpectralField
    dt: float
    step_index: int
    path_id: int


def increment_from_gaussian(spectrum: NoiseSpectrum, dt: float, xi: np.ndarray) -> SpectralField:
    """V_hat_k = i sqrt(dt a_k^2) e_k xi_k.  The factor i keeps V real because e_k is
    odd in k; it leaves the law unchanged."""
    e1, e2 = spectrum.directions
    amp = 1j * np.sqrt(dt * spectrum.weights) * xi
    return SpectralField(spectrum.grid, np.stack([amp * e1, amp * e2]))


def sample_increment(
    spectrum: NoiseSpectrum, dt: float, path_id: int, step_index: int, seed: int, substeps: int = 1
) -> NoiseIncrement:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    xi = aggregated_gaussian(spectrum.grid, seed, path_id, step_index, substeps)
    return NoiseIncrement(increment_from_gaussian(spectrum, dt, xi), float(dt), int(step_index), int(path_id))


def lattice_covariance(spectrum: NoiseSpectrum, lag) -> np.ndarray:
    """sum_k a_k^2 e_k (x) e_k cos(k . lag) for a physical displacement ``lag``."""
    k1, k2 = spectrum.grid.k
    e1, e2 = spectrum.directions
    w = spectrum.weights * np.cos(k1 * lag[0] + k2 * lag[1])
    return np.array([[np.sum(w * e1 * e1), np.sum(w * e1 * e2)], [np.sum(w * e2 * e1), np.sum(w * e2 * e2)]])


def _point_values(coeffs: np.ndarray, phase: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("cij,ij->c", coeffs, phase))


def empirical_covariance(
    spectrum: NoiseSpectrum, dt: float, n_samples: int, lag=(0, 0), seed: int = 0, point=(0, 0)
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean of V(x) (x) V(x + lag) / dt and its standard error.

    ``lag`` and ``point`` are integer grid offsets.  Sample j uses path_id j,
    step_index 0.
    """
    if n_samples < 1000:
        raise ValueError("empirical_covariance needs at least 1000 samples")
    g = spectrum.grid
    k1, k2 = g.k
    x = np.array(point, dtype=float) * g.dx
    y = x + np.array(lag, dtype=float) * g.dx
    ph_x = np.exp(1j * (k1 * x[0] + k2 * x[1]))
    ph_y = np.exp(1j * (k1 * y[0] + k2 * y[1]))
    prods = np.empty((n_samples, 2, 2))
    for j in range(n_samples):
        xi = gaussian_coefficients(g, seed, j, 0)
        v = increment_from_gaussian(spectrum, dt, xi).coeffs
        prods[j] = np.outer(_point_values(v, ph_x), _point_values(v, ph_y)) / dt
    mean = prods.mean(axis=0)
    stderr = prods.std(axis=0, ddof=1) / math.sqrt(n_samples)
    return mean, stderr
