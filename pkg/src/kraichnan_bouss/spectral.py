"""Periodic spectral substrate: grids, Fourier fields, operators and norms.

Coefficients follow f_hat[k] = |T|^-1 * integral(f exp(-i k.x)), i.e. the
discrete transform ``fft2(f) / N**2``.  With this normalization

    ||f||_{H^s}^2 = |T| * sum_{k != 0} |k|^(2s) |f_hat[k]|^2

and s = 0 reproduces the L2 norm with no stray factors of 2*pi.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralField",
    "MeanNotZeroError",
    "DivergenceError",
    "gradient",
    "divergence",
    "curl",
    "laplacian",
    "biot_savart",
    "sobolev_norm",
    "lp_norm",
    "dealias",
    "nonlinear_transport",
    "inner_product",
    "write_snapshot",
    "read_snapshot",
]


class MeanNotZeroError(ValueError):
    """A homogeneous negative-order quantity was requested for a field with nonzero mean."""


class DivergenceError(ValueError):
    """A transporting velocity failed the divergence-free check."""


@dataclass(frozen=True)
class Grid:
    """Square periodic grid with N points per side on [0, L)^2."""

    N: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N!r}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dk(self) -> float:
        """Lattice spacing 2*pi/L of the wavevectors."""
        return 2 * np.pi / self.L

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def area(self) -> float:
        return self.L**2

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer mode numbers (n1, n2) in FFT order, shape (N, N) each."""
        n = np.rint(sfft.fftfreq(self.N, 1.0 / self.N)).astype(np.int64)
        n1, n2 = np.meshgrid(n, n, indexing="ij")
        return n1, n2

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.mode_index
        return self.dk * n1, self.dk * n2

    @cached_property
    def k_deriv(self) -> tuple[np.ndarray, np.ndarray]:
        # Nyquist rows/columns have no real derivative; drop them.
        k1, k2 = (a.copy() for a in self.k)
        n1, n2 = self.mode_index
        k1[np.abs(n1) == self.N // 2] = 0.0
        k2[np.abs(n2) == self.N // 2] = 0.0
        return k1, k2

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2 = self.k
        return k1**2 + k2**2

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """1/|k|^2 with the zero mode mapped to 0."""
        out = np.zeros_like(self.k2)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        n1, n2 = self.mode_index
        cut = self.N / 3.0
        return (np.abs(n1) <= cut) & (np.abs(n2) <= cut)

    @property
    def dealias_radius(self) -> float:
        """Largest wavenumber radius whose disc fits inside the 2/3 band."""
        return self.dk * (self.N // 3)

    @cached_property
    def x(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.N) * self.dx
        return tuple(np.meshgrid(x, x, indexing="ij"))

    def zeros(self, rank: int = 1) -> "SpectralField":
        shape = (self.N, self.N) if rank == 1 else (rank, self.N, self.N)
        return SpectralField(self, np.zeros(shape, dtype=complex))


def _conj_flip(c: np.ndarray) -> np.ndarray:
    """Array whose [k] entry is conj(c[-k])."""
    return np.conj(np.roll(np.flip(c, axis=(-2, -1)), 1, axis=(-2, -1)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real scalar (shape (N, N)) or 2-vector (shape (2, N, N)) field stored by its
    Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        N = self.grid.N
        if c.shape not in ((N, N), (2, N, N)):
            raise ValueError(f"coefficient array of shape {c.shape} does not fit grid N={N}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        return cls(grid, sfft.fft2(values, axes=(-2, -1)) / grid.N**2)

    @property
    def rank(self) -> int:
        return 1 if self.coeffs.ndim == 2 else 2

    @property
    def is_vector(self) -> bool:
        return self.rank == 2

    def physical(self) -> np.ndarray:
        """Grid values; imaginary round-off is discarded."""
        return sfft.ifft2(self.coeffs * self.grid.N**2, axes=(-2, -1)).real

    @property
    def mean(self) -> complex | np.ndarray:
        return self.coeffs[..., 0, 0]

    def is_real(self, rtol: float = 1e-12) -> bool:
        scale = max(np.abs(self.coeffs).max(), 1e-300)
        return bool(np.abs(self.coeffs - _conj_flip(self.coeffs)).max() <= rtol * scale)

    def component(self, i: int) -> "SpectralField":
        if not self.is_vector:
            raise ValueError("scalar field has no components")
        return SpectralField(self.grid, self.coeffs[i])

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


def vector(f1: SpectralField, f2: SpectralField) -> SpectralField:
    return SpectralField(f1.grid, np.stack([f1.coeffs, f2.coeffs]))


def _scalar(f: SpectralField, what: str):
    if f.is_vector:
        raise ValueError(f"{what} expects a scalar field")


def gradient(f: SpectralField) -> SpectralField:
    _scalar(f, "gradient")
    k1, k2 = f.grid.k_deriv
    return SpectralField(f.grid, np.stack([1j * k1 * f.coeffs, 1j * k2 * f.coeffs]))


def divergence(v: SpectralField) -> SpectralField:
    k1, k2 = v.grid.k_deriv
    return SpectralField(v.grid, 1j * k1 * v.coeffs[0] + 1j * k2 * v.coeffs[1])


def curl(v: SpectralField) -> SpectralField:
    """Scalar curl d1 v2 - d2 v1."""
    k1, k2 = v.grid.k_deriv
    return SpectralField(v.grid, 1j * k1 * v.coeffs[1] - 1j * k2 * v.coeffs[0])


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.k2 * f.coeffs)


def _require_mean_zero(f: SpectralField, what: str, atol: float = 1e-12):
    scale = max(float(np.abs(f.coeffs).max()), 1.0)
    if np.any(np.abs(f.mean) > atol * scale):
        raise MeanNotZeroError(f"{what} requires a mean-zero field (mean = {f.mean})")


def biot_savart(omega: SpectralField) -> SpectralField:
    """Velocity u = grad^perp (-Delta)^-1 omega, i.e. u_hat = i k^perp / |k|^2 omega_hat
    with k^perp = (k2, -k1).  Divergence-free with curl(u) = omega."""
    _scalar(omega, "biot_savart")
    _require_mean_zero(omega, "biot_savart")
    g = omega.grid
    k1, k2 = g.k_deriv
    psi = omega.coeffs * g.inv_k2
    return SpectralField(g, np.stack([1j * k2 * psi, -1j * k1 * psi]))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Homogeneous H^s norm for s in [-1, 2]; vector fields sum their components."""
    if not -1.0 <= s <= 2.0:
        raise ValueError(f"Sobolev index s={s} outside [-1, 2]")
    g = f.grid
    power = np.abs(f.coeffs) ** 2
    if f.is_vector:
        power = power.sum(axis=0)
    if s == 0:
        weight = np.ones_like(g.k2)
    else:
        if s < 0:
            _require_mean_zero(f, f"H^{s} norm")
        weight = np.zeros_like(g.k2)
        nz = g.k2 > 0
        weight[nz] = g.k2[nz] ** s
    return float(np.sqrt(g.area * np.sum(weight * power)))


def lp_norm(f: SpectralField, p: float) -> float:
    """L^p norm by uniform-grid quadrature; p = inf gives the grid maximum.
    Vector fields use the pointwise Euclidean magnitude."""
    if not (p >= 1):
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    v = f.physical()
    a = np.sqrt(np.sum(v**2, axis=0)) if f.is_vector else np.abs(v)
    if np.isinf(p):
        return float(a.max())
    cell = f.grid.dx**2
    if p == 1:
        return float(a.sum() * cell)
    return float((np.sum(a**p) * cell) ** (1.0 / p))


def dealias(f: SpectralField) -> SpectralField:
    """2/3-rule truncation; idempotent."""
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Real L2 pairing |T| sum conj(f_hat) g_hat."""
    return float(f.grid.area * np.sum(np.conj(f.coeffs) * g.coeffs).real)


def _to_phys(c: np.ndarray, N: int) -> np.ndarray:
    return sfft.ifft2(c * N**2, axes=(-2, -1)).real


def _to_spec(v: np.ndarray, N: int) -> np.ndarray:
    return sfft.fft2(v, axes=(-2, -1)) / N**2


def divergence_residual(u: SpectralField) -> float:
    """max |k . u_hat| relative to max |u_hat| (zero for the zero field)."""
    k1, k2 = u.grid.k_deriv
    scale = float(np.abs(u.coeffs).max())
    if scale == 0:
        return 0.0
    return float(np.abs(k1 * u.coeffs[0] + k2 * u.coeffs[1]).max() / scale)


def nonlinear_transport(
    u: SpectralField,
    f: SpectralField,
    form: str = "advective",
    check: bool = True,
    grad_f_phys: np.ndarray | None = None,
) -> SpectralField:
    """Dealiased u . grad f from physical-space products of dealiased factors.

    ``form="curl-div"`` instead evaluates curl div(u (x) u), which equals
    u . grad omega when f = curl u; f is then ignored apart from its grid.
    ``grad_f_phys`` lets a caller reuse an already transformed gradient.
    """
    if not u.is_vector:
        raise ValueError("transporting field must be a vector")
    _scalar(f, "nonlinear_transport")
    if check and divergence_residual(u) > 1e-10:
        raise DivergenceError(f"velocity is not divergence-free (residual {divergence_residual(u):.3e})")
    g = u.grid
    N = g.N
    mask = g.dealias_mask
    uu = _to_phys(u.coeffs * mask, N)
    if form == "advective":
        if grad_f_phys is None:
            k1, k2 = g.k_deriv
            fc = f.coeffs * mask
            grad_f_phys = _to_phys(np.stack([1j * k1 * fc, 1j * k2 * fc]), N)
        prod = uu[0] * grad_f_phys[0] + uu[1] * grad_f_phys[1]
        return SpectralField(g, _to_spec(prod, N) * mask)
    if form == "curl-div":
        k1, k2 = g.k_deriv
        t11, t12, t22 = (_to_spec(a, N) for a in (uu[0] * uu[0], uu[0] * uu[1], uu[1] * uu[1]))
        d1 = 1j * k1 * t11 + 1j * k2 * t12
        d2 = 1j * k1 * t12 + 1j * k2 * t22
        return SpectralField(g, (1j * k1 * d2 - 1j * k2 * d1) * mask)
    raise ValueError(f"unknown transport form {form!r}")


def write_snapshot(path, f: SpectralField, name: str, time: float) -> Path:
    """Write the physical grid as little-endian float64 (row-major, components
    stacked for vectors) plus a ``.meta`` key-value sidecar."""
    path = Path(path)
    f.physical().astype("<f8").tofile(path)
    meta = {"N": f.grid.N, "L": repr(f.grid.L), "rank": f.rank, "time": repr(float(time)), "name": name}
    Path(str(path) + ".meta").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    return path


def read_snapshot(path) -> tuple[SpectralField, dict]:
    path = Path(path)
    meta = {}
    for line in Path(str(path) + ".meta").read_text().splitlines():
        if line.strip():
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    N, L, rank = int(meta["N"]), float(meta["L"]), int(meta["rank"])
    shape = (N, N) if rank == 1 else (rank, N, N)
    values = np.fromfile(path, dtype="<f8").reshape(shape)
    meta = dict(meta, N=N, L=L, rank=rank, time=float(meta["time"]))
    return SpectralField.from_physical(Grid(N, L), values), meta
