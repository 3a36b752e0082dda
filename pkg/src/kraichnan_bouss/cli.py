"""Command-line entry point.  Exit status: 0 pass, 1 study FAIL, 2 usage or config error."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, defaults, parse_config
from .diagnostics import (
    check_gradtheta_integral,
    check_interpolation,
    check_lp_bounds,
    check_omega_l2_bound,
    check_theta_energy,
    embedding_stability,
    product_estimate_stability,
)
from .experiments import (
    StudyAbort,
    cauchy_convergence_study,
    ensemble_energy_study,
    strat_ito_consistency,
    uniqueness_probe,
    write_output_dir,
)
from .noise import build_spectrum, empirical_covariance, lattice_covariance
from .solver import BlowUpError, run
from .spectral import Grid, write_snapshot
from .symbol import QuadratureError, symbol_of_J, verify_anomalous_bound

log = logging.getLogger("kraichnan_bouss")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Log:
    """Collects timestamped lines for run.log; tables never carry timestamps."""

    def __init__(self):
        self.lines = []

    def __call__(self, msg):
        self.lines.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {msg}")
        log.info(msg)

    def text(self):
        return "\n".join(self.lines) + "\n"


def _load(args) -> tuple[RunConfig, str]:
    if args.config:
        cfg = parse_config(args.config)
        text = Path(args.config).read_bytes().decode()
    else:
        cfg = defaults()
        cfg.validate()
        text = cfg.to_text()
    if args.seed is not None:
        cfg = cfg.with_values(rng__seed=args.seed)
    if args.paths is not None:
        cfg = cfg.with_values(study__paths=args.paths)
    return cfg, text


def _out(args, cfg: RunConfig, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg["output.directory"]) / name


def _finish(out, text, tables, manifest, lg, extra=None) -> int:
    ok = all(manifest.values())
    lg(f"verdict: {'PASS' if ok else 'FAIL'}")
    path = write_output_dir(out, text, tables, manifest, lg.text(), extra)
    print(f"{'PASS' if ok else 'FAIL'}: results in {path}")
    return EXIT_PASS if ok else EXIT_FAIL


def _report_rows(reports):
    return [[r.name, float(r.margin), float(r.slack), int(r.passed)] for r in reports]


def cmd_simulate(args, cfg, text, lg) -> int:
    sch = cfg.scheme()
    seed = cfg["rng.seed"]
    snap_steps = {int(round(t / sch.dt)): t for t in cfg["output.snapshot_times"]}
    snaps = []

    def observer(i, s):
        if i in snap_steps:
            snaps.append((i, s))

    # snapshots need records at their steps: record every step if any are requested
    if snap_steps:
        sch = sch.with_(record_every=1)
    lg(f"simulate N={sch.grid.N} dt={sch.dt} T={sch.T} mode={sch.mode} seed={seed}")
    _, tr = run(cfg.initial_state(), sch, seed, 0, observer=observer)
    reports = [check_theta_energy(tr), check_omega_l2_bound(tr), check_interpolation(tr)]
    reports += [check_lp_bounds(tr, p) for p in cfg["output.p_list"]]
    reports += [check_gradtheta_integral(tr, p) for p in cfg["output.p_list"]]

    def extra(d):
        for i, s in snaps:
            write_snapshot(d / f"omega_{i:06d}.bin", s.omega, "omega", s.t)
            write_snapshot(d / f"theta_{i:06d}.bin", s.theta, "theta", s.t)

    tables = {
        "trace.csv": (tr.columns, tr.rows),
        "reports.csv": (["name", "margin", "slack", "pass"], _report_rows(reports)),
    }
    return _finish(_out(args, cfg, "simulate"), text, tables, {r.name: r.passed for r in reports}, lg, extra)


def cmd_ensemble(args, cfg, text, lg) -> int:
    n = cfg["study.paths"]
    lg(f"ensemble paths={n} rescales={cfg['study.rescales']}")
    res, spread = ensemble_energy_study(cfg, n, cfg["study.rescales"], workers=args.workers)
    rows, summary = [], []
    for r, s in res.items():
        rows += [[r] + row for row in s.rows()]
        summary.append([r, s.estimate, s.stderr, s.data_norm, s.ratio])
    tables = {
        "paths.csv": (["rescale", "path", "sup_h_minus1_sq", "int_h_minus_alpha_sq"], rows),
        "summary.csv": (["rescale", "estimate", "stderr", "data_norm", "ratio"], summary),
    }
    return _finish(_out(args, cfg, "ensemble"), text, tables, {"ratio_spread_below_2": spread < 2.0}, lg)


def cmd_converge(args, cfg, text, lg) -> int:
    deltas = cfg["study.delta_ladder"]
    if len(deltas) < 3:
        raise ConfigError("study.delta_ladder: needs at least 3 rungs")
    n = cfg["study.paths"]
    lg(f"converge ladder={deltas} paths={n}")
    lad = cauchy_convergence_study(cfg, deltas, n, workers=args.workers)
    med = [[d1, d2, mo, mt] for (d1, d2), mo, mt in zip(lad.pairs, lad.omega_medians, lad.theta_medians)]
    tables = {
        "paths.csv": (["delta1", "delta2", "path", "sup_h_minus1_omega", "sup_h_minus1_theta"], lad.rows()),
        "summary.csv": (["delta1", "delta2", "median_omega", "median_theta"], med),
    }
    manifest = {"omega_medians_decreasing": lad.omega_decreasing, "theta_medians_decreasing": lad.theta_decreasing}
    return _finish(_out(args, cfg, "converge"), text, tables, manifest, lg)


def cmd_uniqueness(args, cfg, text, lg) -> int:
    n = cfg["study.paths"]
    lg(f"uniqueness dt_ladder={cfg['study.dt_ladder']} paths={n}")
    rep = uniqueness_probe(cfg, n, workers=args.workers)
    summary = [[int(d), i, float(m)] for d in rep.gaps for i, m in enumerate(rep.medians(d))]
    tables = {
        "paths.csv": (["dealias", "dt_coarse", "dt_fine", "path", "sup_gap"], rep.rows()),
        "summary.csv": (["dealias", "gap_index", "median_gap"], summary),
        "perturbation.csv": (["path", "gap_growth"], [[j, float(g)] for j, g in enumerate(rep.growth)]),
    }
    return _finish(_out(args, cfg, "uniqueness"), text, tables, {"refinement_ratio": rep.passed}, lg)


def cmd_consistency(args, cfg, text, lg) -> int:
    n = cfg["study.paths"]
    rep = strat_ito_consistency(cfg, n_paths=n, c_num_factor=args.c_num_factor, workers=args.workers)
    lg(f"consistency order={rep.order:.4f}")
    tables = {
        "paths.csv": (["dt", "path", "sup_gap"], rep.rows()),
        "summary.csv": (["dt", "median_gap"], [[d, float(m)] for d, m in zip(rep.dts, rep.medians)]),
        "order.csv": (["order", "min_order", "c_num_factor"], [[rep.order, rep.min_order, rep.c_num_factor]]),
    }
    return _finish(_out(args, cfg, "consistency"), text, tables, {"gap_order": rep.passed}, lg)


def cmd_validate_noise(args, cfg, text, lg) -> int:
    g = Grid(args.N, cfg["grid.L"])
    sp = build_spectrum(cfg["noise.alpha"], cfg["noise.delta"], g)
    seed = cfg["rng.seed"]
    rows, manifest = [], {}
    for lag in [(0, 0)] + [tuple(l) for l in args.lags]:
        mean, se = empirical_covariance(sp, 1.0, args.samples, lag=lag, seed=seed)
        ref = lattice_covariance(sp, np.array(lag) * g.dx)
        z = np.abs(mean - ref) / np.where(se > 0, se, np.inf)
        manifest[f"lag_{lag[0]}_{lag[1]}"] = bool(np.all(z <= 3.0))
        for i in range(2):
            for j in range(2):
                rows.append([lag[0], lag[1], i, j, float(mean[i, j]), float(se[i, j]), float(ref[i, j])])
        lg(f"lag {lag}: max z = {z.max():.3f}")

    def extra(d):
        sp.export_table(d / "spectrum.csv")

    tables = {"covariance.csv": (["lag1", "lag2", "i", "j", "empirical", "stderr", "lattice"], rows)}
    return _finish(_out(args, cfg, "validate-noise"), text, tables, manifest, lg, extra)


def cmd_symbol_check(args, cfg, text, lg) -> int:
    alpha = cfg["noise.alpha"] if args.alpha is None else args.alpha
    lg(f"symbol-check alpha={alpha}")
    prof = verify_anomalous_bound(alpha, 0.0, (1.0, 50.0), args.samples)
    coarse = verify_anomalous_bound(alpha, 0.0, (1.0, 50.0), xi_samples=prof.xi_samples, rtol=1e-8)
    self_conv = float(np.max(np.abs(coarse.m_values - prof.m_values) / np.abs(prof.m_values)))
    m_small = symbol_of_J(alpha, 0.0, 1e-2)
    lg(f"c_alpha={prof.c_alpha:.6g} C={prof.C:.6g} self-convergence={self_conv:.3e} m(0.01)={m_small:.6g}")
    tables = {
        "profile.csv": (["xi", "m", "bound"], [[x, m, b] for x, m, b in zip(prof.xi_samples, prof.m_values, prof.bound(prof.xi_samples))]),
        "constants.csv": (["alpha", "c_alpha", "C", "margin", "self_convergence", "m_at_0.01"], [[alpha, prof.c_alpha, prof.C, prof.margin, self_conv, m_small]]),
    }
    manifest = {"c_alpha_positive": prof.c_alpha > 1e-6, "C_finite": bool(np.isfinite(prof.C)), "self_convergence": self_conv < 1e-6}
    return _finish(_out(args, cfg, f"symbol-check-{alpha:g}"), text, tables, manifest, lg)


def cmd_probe(args, cfg, text, lg) -> int:
    reports = []
    if args.kind in ("product", "all"):
        alpha = cfg["noise.alpha"]
        pairs = [tuple(p) for p in args.ab] or [(0.5, 0.5), (0.8, -0.3), (2 * alpha, 1 - alpha)]
        for a, b in pairs:
            reports.append(product_estimate_stability(a, b, n_samples=args.samples, seed=cfg["rng.seed"]))
    if args.kind in ("embedding", "all"):
        for p in args.p:
            reports.append(embedding_stability(p, n_samples=args.samples, seed=cfg["rng.seed"]))
    for r in reports:
        lg(f"{r.name}: growth {r.margin:.4f} {r.constants}")
    tables = {"probes.csv": (["name", "growth", "limit", "pass"], _report_rows(reports))}
    return _finish(_out(args, cfg, f"probe-{args.kind}"), text, tables, {r.name: r.passed for r in reports}, lg)


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "converge": cmd_converge,
    "uniqueness": cmd_uniqueness,
    "consistency": cmd_consistency,
    "validate-noise": cmd_validate_noise,
    "symbol-check": cmd_symbol_check,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="override rng.seed")
    common.add_argument("--paths", type=int, help="override study.paths")
    common.add_argument("--out", help="output directory (default: output.directory/<subcommand>)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes for independent paths")

    ap = argparse.ArgumentParser(prog="kraichnan-bouss", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "ensemble", "converge", "uniqueness"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("consistency", parents=[common])
    p.add_argument("--c-num-factor", type=float, default=1.0, help="scale the Ito correction (negative control)")
    p = sub.add_parser("validate-noise", parents=[common])
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--lags", type=int, nargs=2, action="append", default=[], metavar=("DX", "DY"))
    p = sub.add_parser("symbol-check", parents=[common])
    p.add_argument("--alpha", type=float)
    p.add_argument("--samples", type=int, default=24)
    p = sub.add_parser("probe", parents=[common])
    p.add_argument("--kind", choices=("product", "embedding", "all"), default="all")
    p.add_argument("--ab", type=float, nargs=2, action="append", default=[], metavar=("A", "B"))
    p.add_argument("--p", type=float, nargs="+", default=[1.25, 1.5, 2.0])
    p.add_argument("--samples", type=int, default=200)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    lg = _Log()
    try:
        cfg, text = _load(args)
        if args.command == "symbol-check" and args.alpha is not None and not 0 < args.alpha < 1:
            raise ConfigError(f"--alpha: must lie in (0, 1), got {args.alpha}")
        return COMMANDS[args.command](args, cfg, text, lg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StudyAbort, BlowUpError, QuadratureError) as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
