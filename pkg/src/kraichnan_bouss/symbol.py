"""Fourier symbol of the noise-induced operator tr[(Q(0) - Q) D^2 G].

With the covariance normalized so that Q(0) = integral of Q_hat, the quadratic
form <J * omega, omega> equals integral m(xi) |omega_hat(xi)|^2 d xi where

    m(xi) = integral_{|eta| <= R} <eta>^-(2+2a) [ (xi . eta^perp)^2 / (|eta|^2 |xi - eta|^2) - 1/2 ] d eta.

The -1/2 absorbs -c_delta (tr of the projector is 1), which keeps the integrand
free of cancellation.  Behaviour: m(0+) = -c_delta, m < 0, and
m(xi) ~ -kappa |xi|^-2a for large xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal

from .noise import NoiseSpectrum, unit_perp
from .spectral import SpectralField, _require_mean_zero

__all__ = [
    "QuadratureError",
    "AnomalousBoundError",
    "SymbolProfile",
    "symbol_of_J",
    "verify_anomalous_bound",
    "lattice_symbol",
    "quadratic_form_on_grid",
]


class QuadratureError(RuntimeError):
    pass


class AnomalousBoundError(RuntimeError):
    """No positive anomalous constant fits the sampled symbol."""


def _angular(r, s, psi, w, rtol):
    """Angle integral at radius r, weighted by <r>^-(2+2a) r."""
    if r == 0.0:
        return 0.0, 0.0
    s2 = s * s

    def f(phi):
        d = phi - psi
        return s2 * math.sin(d) ** 2 / (s2 + r * r - 2 * s * r * math.cos(d)) - 0.5

    val, err = integrate.quad(f, psi, psi + 2 * math.pi, epsabs=1e-13, epsrel=max(rtol * 1e-2, 1e-13), limit=400)
    wr = w(r) * r
    return val * wr, err * wr


def symbol_of_J(alpha: float, delta: float, xi: float, direction: float = 0.0, rtol: float = 1e-10) -> float:
    """m(|xi|) by nested adaptive quadrature in polar coordinates.

    ``direction`` is the polar angle of xi; the result must not depend on it.
    ``delta = 0`` integrates over the whole plane.  Raises QuadratureError when
    the estimated error exceeds 1e-6 |m|.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    s = float(xi)
    R = math.inf if delta == 0 else 1.0 / delta

    def w(r):
        return (1.0 + r * r) ** (-1.0 - alpha)

    def radial(r):
        return _angular(r, s, direction, w, rtol)[0]

    opts = dict(epsabs=1e-13, epsrel=rtol, limit=400)
    total, err = 0.0, 0.0
    pieces = [(0.0, min(s, R))]
    if R > s:
        pieces.append((s, min(2 * s, R)))
    for a, b in pieces:
        v, e = integrate.quad(radial, a, b, **opts)
        total += v
        err += e
    if R > 2 * s:
        # tail in u = r^(-2a): the integrand tends to a constant as u -> 0
        p = 1.0 / (2 * alpha)

        def tail(u):
            r = u ** (-p)
            return radial(r) * p * u ** (-p - 1.0)

        u_hi = (2 * s) ** (-2 * alpha)
        u_lo = 0.0 if math.isinf(R) else R ** (-2 * alpha)
        v, e = integrate.quad(tail, u_lo, u_hi, **opts)
        total += v
        err += e
    if err > 1e-6 * max(abs(total), 1e-300):
        raise QuadratureError(f"symbol quadrature at xi={s} did not converge: value {total:.6e}, error {err:.2e}")
    return total


@dataclass
class SymbolProfile:
    alpha: float
    delta: float
    xi_samples: np.ndarray
    m_values: np.ndarray
    c_alpha: float
    C: float
    plateau: np.ndarray = field(repr=False)

    def bound(self, xi) -> np.ndarray:
        br = 1.0 + np.asarray(xi, dtype=float) ** 2
        return -self.c_alpha * br ** (-self.alpha) + self.C / br

    @property
    def margin(self) -> float:
        """min over samples of bound - m (>= 0 when the bound holds)."""
        return float(np.min(self.bound(self.xi_samples) - self.m_values))

    def plateau_spread(self, lo: float = 20.0, hi: float = 50.0) -> float:
        sel = (self.xi_samples >= lo) & (self.xi_samples <= hi)
        p = self.plateau[sel]
        return float((p.max() - p.min()) / abs(p.mean()))

    def write(self, path):
        """(|xi|, m) table plus a ``.meta`` sidecar with the fitted constants."""
        np.savetxt(path, np.column_stack([self.xi_samples, self.m_values]), fmt="%.17g", delimiter=",", header="xi,m", comments="")
        with open(str(path) + ".meta", "w") as fh:
            fh.write(f"alpha = {self.alpha!r}\ndelta = {self.delta!r}\nc_alpha = {self.c_alpha!r}\nC = {self.C!r}\n")


def verify_anomalous_bound(alpha: float, delta: float = 0.0, xi_range=(1.0, 50.0), n_samples: int = 24, xi_samples=None, rtol: float = 1e-10) -> SymbolProfile:
    """Fit m(xi) <= -c_alpha <xi>^-2a + C <xi>^-2 over log-spaced radii.

    c_alpha is half the smallest value of -m <xi>^(2a) over the upper half of the
    range (where the <xi>^-2 term is weakest); C is then the least constant making
    the bound hold at every sample.
    """
    lo, hi = xi_range
    if not (1.0 <= lo < hi <= 100.0):
        raise ValueError("xi_range must lie inside [1, 100]")
    xs = np.geomspace(lo, hi, n_samples) if xi_samples is None else np.asarray(xi_samples, dtype=float)
    ms = np.array([symbol_of_J(alpha, delta, x, rtol=rtol) for x in xs])
    br = 1.0 + xs**2
    plateau = -ms * br**alpha
    upper = xs >= math.sqrt(xs.min() * xs.max())
    c_alpha = 0.5 * float(plateau[upper].min())
    if not c_alpha > 1e-6:
        raise AnomalousBoundError(f"symbol is not negative in the tail (min plateau {2 * c_alpha:.3e})")
    C = max(0.0, float(np.max((ms + c_alpha * br ** (-alpha)) * br)))
    return SymbolProfile(float(alpha), float(delta), xs, ms, c_alpha, C, plateau)


_lattice_cache: dict[tuple[int, bool], np.ndarray] = {}


def lattice_symbol(spectrum: NoiseSpectrum, dealias: bool = True) -> np.ndarray:
    """m_N(k) = -c_num + sum_eta a_eta^2 (k . e_eta)^2 / |k + eta|^2 on the grid, FFT order.

    With ``dealias`` the sum keeps only output modes k + eta inside the 2/3 band,
    which is exactly what the solver retains of V . grad(omega).
    """
    key = (id(spectrum), dealias)
    cached = _lattice_cache.get(key)
    if cached is not None and cached[0] is spectrum:
        return cached[1]
    g = spectrum.grid
    N = g.N
    e1, e2 = unit_perp(g)
    w = spectrum.weights
    A = [np.fft.fftshift(w * a * b) for a, b in ((e1, e1), (e1, e2), (e2, e2))]
    # weight 1/|q|^2 on the doubled lattice q in [-N, N)^2, centered at index N
    q = np.arange(-N, N)
    q1, q2 = np.meshgrid(q, q, indexing="ij")
    qq = (q1**2 + q2**2) * g.dk**2
    W = np.zeros_like(qq, dtype=float)
    W[qq > 0] = 1.0 / qq[qq > 0]
    if dealias:
        W[(np.abs(q1) > N / 3) | (np.abs(q2) > N / 3)] = 0.0
    S = [signal.fftconvolve(a, W, mode="full")[N : 2 * N, N : 2 * N] for a in A]
    k1, k2 = (np.fft.fftshift(k) for k in g.k)
    m = -spectrum.c_num + k1 * k1 * S[0] + 2 * k1 * k2 * S[1] + k2 * k2 * S[2]
    m = np.fft.ifftshift(m)
    _lattice_cache[key] = (spectrum, m)
    return m


def quadratic_form_on_grid(spectrum: NoiseSpectrum, omega: SpectralField, dealias: bool = True) -> float:
    """|T| sum_k m_N(k) |omega_hat_k|^2: the expected noise drift of ||omega||^2 in H^-1 per unit time."""
    _require_mean_zero(omega, "quadratic_form_on_grid")
    m = lattice_symbol(spectrum, dealias)
    return float(omega.grid.area * np.sum(m * np.abs(omega.coeffs) ** 2))
