"""Ensemble studies: energy bounds, cutoff-ladder convergence, dt refinement and
Ito / Stratonovich consistency.  Every number is determined by (config, seed)."""

from __future__ import annotations

import csv
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import trapezoid_cumulative
from .solver import BlowUpError, lockstep_run, run
from .spectral import SpectralField, sobolev_norm

__all__ = [
    "StudyAbort",
    "EnsembleSummary",
    "ConvergenceLadder",
    "RefinementReport",
    "ConsistencyReport",
    "ensemble_energy_study",
    "cauchy_convergence_study",
    "uniqueness_probe",
    "strat_ito_consistency",
    "fit_order",
    "write_output_dir",
]


class StudyAbort(RuntimeError):
    """A path blew up; the message names it."""


def _map(fn, args, workers: int = 1):
    args = list(args)
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))


def _se(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def fit_order(dts, gaps) -> float:
    """Least-squares slope of log(gap) against log(dt)."""
    dts = np.asarray(dts, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if np.all(gaps == 0):
        return math.inf
    if np.any(gaps <= 0):
        return math.nan
    return float(np.polyfit(np.log(dts), np.log(gaps), 1)[0])


# ---- ensemble energy ---------------------------------------------------------


@dataclass
class EnsembleSummary:
    rescale: float
    n_paths: int
    sup_h_minus1: np.ndarray
    int_h_minus_alpha: np.ndarray
    data_norm: float
    fingerprint: str

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("an ensemble needs at least two paths")

    @property
    def estimate(self) -> float:
        """E_hat = mean sup ||w||^2_{H^-1} + mean int ||w||^2_{H^-alpha}."""
        return float(self.sup_h_minus1.mean() + self.int_h_minus_alpha.mean())

    @property
    def stderr(self) -> float:
        return _se(self.sup_h_minus1 + self.int_h_minus_alpha)

    @property
    def ratio(self) -> float:
        return self.estimate / self.data_norm if self.data_norm > 0 else 0.0

    def rows(self):
        return [[j, s, i] for j, (s, i) in enumerate(zip(self.sup_h_minus1, self.int_h_minus_alpha))]


def _energy_path(cfg: RunConfig, rescale: float, seed: int, path_id: int):
    try:
        _, tr = run(cfg.initial_state(rescale), cfg.scheme(), seed, path_id)
    except BlowUpError as exc:
        raise StudyAbort(f"path {path_id} (rescale {rescale:g}) blew up: {exc}") from None
    sup = float(np.max(tr["h_minus1_omega"] ** 2))
    integ = float(trapezoid_cumulative(tr.t, tr["h_minus_alpha_omega"] ** 2)[-1])
    return sup, integ


def ensemble_energy_study(cfg: RunConfig, n_paths: int, rescales=(0.5, 1.0, 2.0), seed: int | None = None, workers: int = 1):
    """Per rescale factor, the energy estimator over ``n_paths`` independent paths.
    Returns ({rescale: EnsembleSummary}, spread) with spread = max ratio / min ratio."""
    if n_paths < 8:
        raise ValueError("ensemble_energy_study needs n_paths >= 8")
    seed = cfg["rng.seed"] if seed is None else seed
    out = {}
    for r in rescales:
        s0 = cfg.initial_state(r)
        den = sobolev_norm(s0.omega, -1.0) ** 2 + sobolev_norm(s0.theta, 0.0) ** 2
        res = _map(_energy_path, [(cfg, r, seed, j) for j in range(n_paths)], workers)
        sup, integ = (np.array(v) for v in zip(*res))
        out[r] = EnsembleSummary(float(r), n_paths, sup, integ, den, cfg.fingerprint(seed))
    ratios = [s.ratio for s in out.values() if s.data_norm > 0]
    spread = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else 1.0
    return out, spread


# ---- cutoff ladder -------------------------------------------------------------


@dataclass
class ConvergenceLadder:
    pairs: list
    omega_sup: np.ndarray  # (n_pairs, n_paths)
    theta_sup: np.ndarray
    curves: list = field(default_factory=list, repr=False)

    @property
    def omega_medians(self) -> np.ndarray:
        return np.median(self.omega_sup, axis=1)

    @property
    def theta_medians(self) -> np.ndarray:
        return np.median(self.theta_sup, axis=1)

    @staticmethod
    def _decreasing(m) -> bool:
        return bool(np.all(np.diff(m) < 0))

    @property
    def omega_decreasing(self) -> bool:
        return self._decreasing(self.omega_medians)

    @property
    def theta_decreasing(self) -> bool:
        return self._decreasing(self.theta_medians)

    @property
    def passed(self) -> bool:
        return self.omega_decreasing and self.theta_decreasing

    def rows(self):
        out = []
        for i, (d1, d2) in enumerate(self.pairs):
            for j in range(self.omega_sup.shape[1]):
                out.append([d1, d2, j, self.omega_sup[i, j], self.theta_sup[i, j]])
        return out


def _ladder_path(cfg: RunConfig, deltas, seed: int, path_id: int):
    inits = [cfg.initial_state(mollify_delta=d) for d in deltas]
    cfgs = [cfg.scheme(noise=cfg.spectrum(d), extra_viscosity=d) for d in deltas]
    try:
        _, _, diffs = lockstep_run(inits, cfgs, seed, path_id)
    except BlowUpError as exc:
        raise StudyAbort(f"path {path_id} blew up: {exc}") from None
    keys = sorted(diffs)
    return (
        [diffs[k].sup("h_minus1_omega") for k in keys],
        [diffs[k].sup("h_minus1_theta") for k in keys],
        [diffs[k].rows() for k in keys],
    )


def cauchy_convergence_study(cfg: RunConfig, deltas, n_paths: int, seed: int | None = None, workers: int = 1) -> ConvergenceLadder:
    """Coupled runs of consecutive ladder rungs (data mollified at delta_j, noise cut
    at 1/delta_j, extra viscosity delta_j) under shared Gaussians."""
    deltas = [float(d) for d in deltas]
    if len(deltas) < 3:
        raise ValueError("the delta ladder needs at least 3 rungs")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("the delta ladder must be strictly decreasing")
    g = cfg.grid()
    if 1.0 / deltas[-1] > g.dealias_radius:
        raise ValueError(f"1/delta = {1 / deltas[-1]:g} exceeds the dealiased radius {g.dealias_radius:g}")
    seed = cfg["rng.seed"] if seed is None else seed
    res = _map(_ladder_path, [(cfg, deltas, seed, j) for j in range(n_paths)], workers)
    om = np.array([r[0] for r in res]).T
    th = np.array([r[1] for r in res]).T
    pairs = list(zip(deltas, deltas[1:]))
    return ConvergenceLadder(pairs, om, th, [r[2] for r in res])


# ---- dt refinement ---------------------------------------------------------------


def _dt_ladder_gaps(cfg: RunConfig, dts, seed, path_id, dealias: bool):
    """sup_t ||w^{dt_j} - w^{dt_j+1}||_{H^-1} over the coarse-step times, all runs on
    the Brownian path of the finest step."""
    fine = dts[-1]
    coarse = dts[0]
    init = cfg.initial_state()
    snaps = []
    for dt in dts:
        m = int(round(dt / fine))
        every = int(round(coarse / dt))
        sch = cfg.scheme(dt=dt, dealias=dealias, record_every=every)
        store = {}
        try:
            run(init, sch, seed, path_id, substeps=m, observer=lambda i, s, store=store, e=every: store.__setitem__(i // e, s.omega))
        except BlowUpError as exc:
            raise StudyAbort(f"path {path_id} blew up at dt={dt:g}: {exc}") from None
        snaps.append(store)
    gaps = []
    for a, b in zip(snaps, snaps[1:]):
        gaps.append(max(sobolev_norm(a[i] - b[i], -1.0) for i in a))
    return gaps


def _perturbation_growth(cfg: RunConfig, dt, eps0, seed, path_id):
    from .initial_data import builtin_profile
    from .solver import SimState, coupled_run

    init = cfg.initial_state()
    g = init.grid
    bump = builtin_profile("random-lp", g, seed=path_id + 1)
    bump = bump * (eps0 / sobolev_norm(bump, -1.0))
    init2 = SimState(init.omega + bump, init.theta, 0.0)
    sch = cfg.scheme(dt=dt)
    _, _, d = coupled_run(init, init2, sch, sch, seed, path_id)
    return d.h_minus1_omega[-1] / d.h_minus1_omega[0]


def _refine_path(cfg, dts, eps0, seed, path_id):
    return (
        _dt_ladder_gaps(cfg, dts, seed, path_id, True),
        _dt_ladder_gaps(cfg, dts, seed, path_id, False),
        _perturbation_growth(cfg, dts[-1], eps0, seed, path_id),
    )


@dataclass
class RefinementReport:
    dts: list
    gaps: dict  # dealias setting -> (n_gaps, n_paths)
    growth: np.ndarray
    min_ratio: float

    def medians(self, dealias: bool) -> np.ndarray:
        return np.median(self.gaps[dealias], axis=1)

    def ratios(self, dealias: bool) -> np.ndarray:
        m = self.medians(dealias)
        return m[:-1] / m[1:] if m.size > 1 else np.array([])

    @property
    def passed(self) -> bool:
        return all(np.all(self.ratios(d) >= self.min_ratio) for d in self.gaps)

    def rows(self):
        out = []
        for d, G in self.gaps.items():
            for i in range(G.shape[0]):
                for j in range(G.shape[1]):
                    out.append([int(d), self.dts[i], self.dts[i + 1], j, G[i, j]])
        return out


def uniqueness_probe(
    cfg: RunConfig, n_paths: int, dts=None, eps0: float | None = None, min_ratio: float | None = None, seed=None, workers: int = 1
) -> RefinementReport:
    """Same data, same fixed noise, a ladder of dt values (each a multiple of the next),
    with and without dealiasing.  Gap ratios of ensemble medians must reach
    ``min_ratio`` per refinement.  Also reports the growth of an eps0 initial gap."""
    dts = [float(x) for x in (dts or cfg["study.dt_ladder"])]
    if len(dts) < 3:
        raise ValueError("the dt ladder needs at least 3 entries")
    for a, b in zip(dts, dts[1:]):
        if not (a > b and abs(a / b - round(a / b)) < 1e-9):
            raise ValueError("each dt must be a whole multiple of the next, strictly decreasing")
    eps0 = cfg["study.eps0"] if eps0 is None else eps0
    min_ratio = cfg["study.min_ratio"] if min_ratio is None else min_ratio
    seed = cfg["rng.seed"] if seed is None else seed
    res = _map(_refine_path, [(cfg, dts, eps0, seed, j) for j in range(n_paths)], workers)
    gaps = {True: np.array([r[0] for r in res]).T, False: np.array([r[1] for r in res]).T}
    return RefinementReport(dts, gaps, np.array([r[2] for r in res]), float(min_ratio))


# ---- Ito / Stratonovich ---------------------------------------------------------


@dataclass
class ConsistencyReport:
    dts: list
    gaps: np.ndarray  # (n_dts, n_paths)
    order: float
    min_order: float
    c_num_factor: float

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.gaps, axis=1)

    @property
    def passed(self) -> bool:
        return bool(self.order >= self.min_order)

    def rows(self):
        return [[self.dts[i], j, self.gaps[i, j]] for i in range(len(self.dts)) for j in range(self.gaps.shape[1])]


def _consistency_path(cfg: RunConfig, dts, c_num_factor, seed, path_id):
    gaps = []
    coarse = dts[0]
    for dt in dts:
        every = int(round(coarse / dt))
        ito = cfg.scheme(dt=dt, mode="ito-em", record_every=every)
        if c_num_factor != 1.0:
            ito = ito.with_(noise=ito.noise.with_c_num(ito.noise.c_num * c_num_factor))
        strat = cfg.scheme(dt=dt, mode="strat-heun", record_every=every)
        init = cfg.initial_state()
        try:
            _, _, diffs = lockstep_run([init, init], [ito, strat], seed, path_id)
        except BlowUpError as exc:
            raise StudyAbort(f"path {path_id} blew up at dt={dt:g}: {exc}") from None
        gaps.append(diffs[(0, 1)].sup("h_minus1_omega"))
    return gaps


def strat_ito_consistency(
    cfg: RunConfig, dts=None, n_paths: int = 1, c_num_factor: float = 1.0, min_order: float | None = None, seed=None, workers: int = 1
) -> ConsistencyReport:
    """Coupled ito-em vs strat-heun runs per dt; the sup_t H^-1 gap of the ensemble
    median must shrink with fitted order >= ``min_order``.  ``c_num_factor`` != 1
    corrupts the Ito correction (negative control)."""
    dts = [float(x) for x in (dts or cfg["study.dt_ladder"])]
    if len(dts) < 3:
        raise ValueError("the dt ladder needs at least 3 entries")
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("the dt ladder must be strictly decreasing")
    min_order = cfg["study.min_order"] if min_order is None else min_order
    seed = cfg["rng.seed"] if seed is None else seed
    res = _map(_consistency_path, [(cfg, dts, c_num_factor, seed, j) for j in range(n_paths)], workers)
    gaps = np.array(res).T
    order = fit_order(dts, np.median(gaps, axis=1))
    return ConsistencyReport(dts, gaps, order, float(min_order), float(c_num_factor))


# ---- output directories -----------------------------------------------------------


def _write_table(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])


def write_output_dir(out, config_text: str, tables: dict, manifest: dict, log: str = "", extra=None) -> Path:
    """Assemble the directory under a temporary name, then rename it into place.

    ``tables`` maps file name -> (header, rows); ``manifest`` maps check -> bool;
    ``extra(tmpdir)`` may write further files.
    """
    from . import __version__

    out = Path(out).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        (tmp / "config.ini").write_text(config_text)
        (tmp / "VERSION").write_text(__version__ + "\n")
        for name, (header, rows) in tables.items():
            _write_table(tmp / name, header, rows)
        _write_table(tmp / "manifest.csv", ["check", "pass"], [[k, int(bool(v))] for k, v in manifest.items()])
        (tmp / "run.log").write_text(log)
        if extra is not None:
            extra(tmp)
        old = None
        if out.exists():
            old = out.with_name(f".{out.name}-old-{os.getpid()}")
            os.replace(out, old)
        os.replace(tmp, out)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out
