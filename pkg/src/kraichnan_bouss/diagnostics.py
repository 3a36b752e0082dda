"""Norms along a trajectory and checks of the energy / transport inequalities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import Grid, SpectralField, gradient, lp_norm, sobolev_norm

__all__ = [
    "DiagnosticsRecord",
    "DiagnosticsTrace",
    "BoundCheckReport",
    "compute_record",
    "trapezoid_cumulative",
    "check_theta_energy",
    "check_omega_l2_bound",
    "check_lp_bounds",
    "check_gradtheta_integral",
    "gradtheta_scaling_check",
    "check_interpolation",
    "product_ratio",
    "product_estimate_probe",
    "product_estimate_stability",
    "embedding_probe",
    "embedding_stability",
    "write_reports",
]


def _pkey(p: float) -> str:
    return f"{float(p):g}"


@dataclass
class DiagnosticsRecord:
    t: float
    h_minus1_omega: float
    h_minus_alpha_omega: float
    l2_omega: float
    l1_omega: float
    l2_theta: float
    l1_theta: float
    h_minus1_theta: float
    grad_l2_theta: float
    grad_l1_theta: float
    lp_omega: dict = field(default_factory=dict)
    grad_lp_theta: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {
            k: getattr(self, k)
            for k in (
                "t",
                "h_minus1_omega",
                "h_minus_alpha_omega",
                "l2_omega",
                "l1_omega",
                "l2_theta",
                "l1_theta",
                "h_minus1_theta",
                "grad_l2_theta",
                "grad_l1_theta",
            )
        }
        for p in sorted(self.lp_omega):
            row[f"lp_omega[{_pkey(p)}]"] = self.lp_omega[p]
        for p in sorted(self.grad_lp_theta):
            row[f"grad_lp_theta[{_pkey(p)}]"] = self.grad_lp_theta[p]
        return row


def compute_record(t: float, omega: SpectralField, theta: SpectralField, alpha: float, p_list=()) -> DiagnosticsRecord:
    grad_theta = gradient(theta)
    rec = DiagnosticsRecord(
        t=float(t),
        h_minus1_omega=sobolev_norm(omega, -1.0),
        h_minus_alpha_omega=sobolev_norm(omega, -alpha),
        l2_omega=sobolev_norm(omega, 0.0),
        l1_omega=lp_norm(omega, 1),
        l2_theta=sobolev_norm(theta, 0.0),
        l1_theta=lp_norm(theta, 1),
        h_minus1_theta=sobolev_norm(theta, -1.0),
        grad_l2_theta=sobolev_norm(grad_theta, 0.0),
        grad_l1_theta=lp_norm(grad_theta, 1),
    )
    for p in p_list:
        rec.lp_omega[float(p)] = lp_norm(omega, p)
        rec.grad_lp_theta[float(p)] = lp_norm(grad_theta, p)
    return rec


class DiagnosticsTrace:
    """Column table of records at increasing times."""

    def __init__(self, columns=None, rows=None, alpha: float | None = None):
        self.columns: list[str] = list(columns or [])
        self.rows: list[list[float]] = [list(r) for r in (rows or [])]
        self.alpha = alpha

    @classmethod
    def from_records(cls, records, alpha=None) -> "DiagnosticsTrace":
        tr = cls(alpha=alpha)
        for r in records:
            tr.append(r)
        return tr

    def append(self, record) -> None:
        row = record.as_row() if hasattr(record, "as_row") else dict(record)
        if not self.columns:
            self.columns = list(row)
        elif list(row) != self.columns:
            raise ValueError("record columns do not match the trace")
        if self.rows and row["t"] < self.rows[-1][0]:
            raise ValueError("trace times must be nondecreasing")
        self.rows.append([float(row[c]) for c in self.columns])

    def __len__(self):
        return len(self.rows)

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"trace has no column {name!r}") from None
        return np.array([r[j] for r in self.rows])

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    def lp_column(self, kind: str, p: float) -> np.ndarray:
        name = f"{kind}[{_pkey(p)}]"
        if name not in self.columns:
            raise KeyError(f"p = {p} was not recorded (missing column {name})")
        return self[name]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([f"{v:.17g}" for v in r])
        return path

    @classmethod
    def read_csv(cls, path, alpha=None) -> "DiagnosticsTrace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls(rows[0], [[float(v) for v in r] for r in rows[1:]], alpha=alpha)


@dataclass
class BoundCheckReport:
    name: str
    margin: float
    slack: float
    passed: bool
    constants: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {"name": self.name, "margin": self.margin, "slack": self.slack, "pass": self.passed}
        row.update(self.constants)
        return row


def _report(name, margin, slack, constants=None) -> BoundCheckReport:
    return BoundCheckReport(name, float(margin), float(slack), bool(margin <= slack), dict(constants or {}))


def trapezoid_cumulative(t: np.ndarray, y: np.ndarray, rule: str = "trapezoid") -> np.ndarray:
    """Running integral of y over the recorded times, starting at 0."""
    dt = np.diff(t)
    if rule == "trapezoid":
        pieces = 0.5 * dt * (y[1:] + y[:-1])
    elif rule == "right":
        pieces = dt * y[1:]
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return np.concatenate([[0.0], np.cumsum(pieces)])


def _nonempty(trace: DiagnosticsTrace):
    if len(trace) == 0:
        raise ValueError("empty trace")


def check_theta_energy(trace: DiagnosticsTrace, slack: float = 5e-2, rule: str = "trapezoid") -> BoundCheckReport:
    """Residual of ||theta_t||^2 + 2 int ||grad theta||^2 = ||theta_0||^2, relative to ||theta_0||^2.

    margin is max_t |residual|; ``signed_max`` keeps the largest signed value, which
    must stay <= 0 for a dissipative scheme.  ``rule="right"`` integrates with the
    right endpoint, matching backward-Euler diffusion exactly.
    """
    _nonempty(trace)
    t = trace.t
    e = trace["l2_theta"] ** 2
    e0 = e[0]
    if e0 == 0:
        return _report("theta_energy", 0.0, slack, {"signed_max": 0.0})
    diss = trapezoid_cumulative(t, 2 * trace["grad_l2_theta"] ** 2, rule)
    res = (e + diss - e0) / e0
    return _report("theta_energy", np.max(np.abs(res)), slack, {"signed_max": float(res.max())})


def check_omega_l2_bound(trace: DiagnosticsTrace, slack: float = 1e-3) -> BoundCheckReport:
    """||omega_t|| <= (||omega_0|| + sqrt(t) ||theta_0||)(1 + slack); margin is max ratio - 1."""
    _nonempty(trace)
    t = trace.t - trace.t[0]
    w = trace["l2_omega"]
    bound = w[0] + np.sqrt(t) * trace["l2_theta"][0]
    ratio = np.where(bound > 0, w / np.where(bound > 0, bound, 1.0), np.where(w > 0, np.inf, 0.0))
    return _report("omega_l2_bound", np.max(ratio) - 1.0, slack)


def check_lp_bounds(trace: DiagnosticsTrace, p: float, slack: float = 1e-2) -> BoundCheckReport:
    """||omega_t||_p <= ||omega_0||_p + int_0^t ||grad theta||_p, margin = max ratio - 1."""
    _nonempty(trace)
    w = trace.lp_column("lp_omega", p)
    g = trace.lp_column("grad_lp_theta", p)
    bound = w[0] + trapezoid_cumulative(trace.t, g)
    ratio = np.where(bound > 0, w / np.where(bound > 0, bound, 1.0), np.where(w > 0, np.inf, 0.0))
    return _report(f"lp_bound[{_pkey(p)}]", np.max(ratio) - 1.0, slack)


def check_gradtheta_integral(trace: DiagnosticsTrace, p: float) -> BoundCheckReport:
    """R = int ||grad theta||_{L1 cap Lp} / (||theta_0||_{L1 cap L2} + ||theta_0||_{L2} sup ||omega||_{H^-1}).

    Intersection norms are sums.  A zero denominator is a vacuous pass.
    Pass means R is finite; the scaling verdict lives in gradtheta_scaling_check.
    """
    _nonempty(trace)
    num = trapezoid_cumulative(trace.t, trace["grad_l1_theta"] + trace.lp_column("grad_lp_theta", p))[-1]
    th1, th2 = trace["l1_theta"][0], trace["l2_theta"][0]
    den = th1 + th2 + th2 * trace["h_minus1_omega"].max()
    if den == 0:
        return _report(f"gradtheta_integral[{_pkey(p)}]", 0.0, 0.0, {"R": 0.0, "vacuous": True})
    R = num / den
    return _report(f"gradtheta_integral[{_pkey(p)}]", 0.0 if math.isfinite(R) else math.inf, 0.0, {"R": R, "vacuous": False})


def _spread_report(name, values, limit) -> BoundCheckReport:
    v = np.asarray([x for x in values if x > 0])
    spread = float(v.max() / v.min()) if v.size else 1.0
    return BoundCheckReport(name, spread, limit, spread < limit, {"values": list(map(float, values))})


def gradtheta_scaling_check(traces, p: float, limit: float = 2.0) -> BoundCheckReport:
    """R from runs at rescaled data must agree within a factor ``limit``."""
    Rs = [check_gradtheta_integral(tr, p).constants["R"] for tr in traces]
    return _spread_report(f"gradtheta_scaling[{_pkey(p)}]", Rs, limit)


def check_interpolation(trace: DiagnosticsTrace, alpha: float | None = None, rtol: float = 1e-8) -> BoundCheckReport:
    """||w||^2_{H^-a} <= ||w||^{2(1-a)}_{L2} ||w||^{2a}_{H^-1} at every record."""
    _nonempty(trace)
    a = trace.alpha if alpha is None else alpha
    if a is None:
        raise ValueError("alpha is needed for the interpolation check")
    lhs = trace["h_minus_alpha_omega"] ** 2
    rhs = trace["l2_omega"] ** (2 * (1 - a)) * trace["h_minus1_omega"] ** (2 * a)
    ok = rhs > 0
    excess = np.where(ok, lhs / np.where(ok, rhs, 1.0) - 1.0, np.where(lhs > 0, np.inf, 0.0))
    return _report("interpolation", np.max(excess), rtol)


# ---- sampling probes -------------------------------------------------------


def _random_field(grid: Grid, rng: np.random.Generator, kmax: float) -> SpectralField:
    """Mean-zero real field, band-limited to |n_i| <= kmax / dk, with a random
    power-law slope so that both smooth and rough samples occur."""
    slope = rng.uniform(0.0, 3.0)
    white = SpectralField.from_physical(grid, rng.standard_normal((grid.N, grid.N)))
    n1, n2 = grid.mode_index
    band = (np.maximum(np.abs(n1), np.abs(n2)) * grid.dk <= kmax) & (grid.kmag > 0)
    filt = np.zeros_like(grid.kmag)
    filt[band] = grid.kmag[band] ** (-slope)
    return SpectralField(grid, white.coeffs * filt)


def product_ratio(f: SpectralField, g: SpectralField, a: float, b: float) -> float:
    """||fg - mean||_{H^(a+b-1)} / (||f||_{H^a} ||g||_{H^b}) with the product formed on the grid."""
    fg = SpectralField.from_physical(f.grid, f.physical() * g.physical())
    c = fg.coeffs.copy()
    c[0, 0] = 0.0
    den = sobolev_norm(f, a) * sobolev_norm(g, b)
    if den == 0:
        raise ValueError("degenerate factor")
    return sobolev_norm(SpectralField(f.grid, c), a + b - 1.0) / den


def _check_product_params(a, b):
    if not (-1 < a < 1 and -1 < b < 1 and a + b > 0):
        raise ValueError(f"product estimate needs a, b in (-1, 1) with a + b > 0, got a={a}, b={b}")


def product_estimate_probe(a: float, b: float, n_samples: int = 1000, seed: int = 0, N: int = 64, L: float = 2 * math.pi) -> float:
    """Largest observed product ratio over random band-limited pairs.  Factors are
    limited to |n_i| <= N/4 so the grid product is alias-free."""
    _check_product_params(a, b)
    grid = Grid(N, L)
    rng = np.random.default_rng(seed)
    best = 0.0
    done = 0
    while done < n_samples:
        f = _random_field(grid, rng, grid.dk * (N // 4))
        g = _random_field(grid, rng, grid.dk * (N // 4))
        if not (np.any(f.coeffs) and np.any(g.coeffs)):
            continue
        best = max(best, product_ratio(f, g, a, b))
        done += 1
    return best


def product_estimate_stability(a, b, Ns=(64, 128), n_samples=1000, seed=0, limit=1.5) -> BoundCheckReport:
    vals = [product_estimate_probe(a, b, n_samples, seed, N) for N in Ns]
    growth = max(v2 / v1 for v1, v2 in zip(vals, vals[1:]))
    return BoundCheckReport(f"product[{a:g},{b:g}]", growth, limit, growth < limit, {"max_ratio": vals, "N": list(Ns)})


def embedding_probe(p: float, n_samples: int = 200, seed: int = 0, N: int = 64, L: float = 2 * math.pi) -> float:
    """Largest ||w||_{H^(1-2/p)} / ||w||_{L^p} over random mean-zero samples, p in (1, 2]."""
    if not 1 < p <= 2:
        raise ValueError(f"embedding probe needs p in (1, 2], got {p}")
    grid = Grid(N, L)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_samples):
        w = _random_field(grid, rng, grid.dealias_radius)
        best = max(best, sobolev_norm(w, 1.0 - 2.0 / p) / lp_norm(w, p))
    return best


def embedding_stability(p, Ns=(64, 128), n_samples=200, seed=0, limit=1.5) -> BoundCheckReport:
    vals = [embedding_probe(p, n_samples, seed, N) for N in Ns]
    growth = max(v2 / v1 for v1, v2 in zip(vals, vals[1:]))
    return BoundCheckReport(f"embedding[{p:g}]", growth, limit, growth < limit, {"C_emb": vals, "N": list(Ns)})


def write_reports(reports, path) -> Path:
    """Machine-readable (name, margin, slack, pass) table."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "margin", "slack", "pass"])
        for r in reports:
            w.writerow([r.name, f"{r.margin:.17g}", f"{r.slack:.17g}", int(r.passed)])
    return path
