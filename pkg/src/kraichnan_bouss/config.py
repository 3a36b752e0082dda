"""Run configuration: INI sections grid / scheme / noise / initial_data / output / rng / study."""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .initial_data import InitialDataSpec, build_initial_field
from .noise import NoiseSpectrum, build_spectrum
from .solver import SchemeConfig, SimState
from .spectral import Grid

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _fmt_floats(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _params(text: str) -> dict:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        val = val.strip()
        try:
            out[key.strip()] = int(val)
        except ValueError:
            out[key.strip()] = float(val)
    return out


def _fmt_params(d: dict) -> str:
    return ", ".join(f"{k}={v!r}" for k, v in d.items())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, formatter, default)
_SCHEMA = {
    "grid": {"N": (int, str, 64), "L": (float, repr, 2 * math.pi)},
    "scheme": {
        "dt": (float, repr, 1e-3),
        "T": (float, repr, 0.1),
        "mode": (str, str, "ito-em"),
        "extra_viscosity": (float, repr, 0.0),
        "dealias": (_bool, lambda b: "true" if b else "false", True),
        "record_every": (int, str, 1),
        "kappa": (float, repr, 1.0),
    },
    "noise": {"alpha": (float, repr, 0.25), "delta": (float, repr, 0.0), "scale": (float, repr, 1.0)},
    "initial_data": {
        "omega": (str, str, "gaussian-vortex-pair"),
        "omega_params": (_params, _fmt_params, {}),
        "theta": (str, str, "checkerboard-temperature"),
        "theta_params": (_params, _fmt_params, {}),
        "mollify_delta": (_opt_float, lambda v: "none" if v is None else repr(v), None),
        "rescale": (float, repr, 1.0),
    },
    "output": {
        "directory": (str, str, "out"),
        "snapshot_times": (_floats, _fmt_floats, ()),
        "p_list": (_floats, _fmt_floats, (1.5, 2.0, 4.0)),
    },
    "rng": {"seed": (int, str, 0)},
    "study": {
        "paths": (int, str, 8),
        "dt_ladder": (_floats, _fmt_floats, ()),
        "delta_ladder": (_floats, _fmt_floats, ()),
        "rescales": (_floats, _fmt_floats, (0.5, 1.0, 2.0)),
        "eps0": (float, repr, 1e-8),
        "min_order": (float, repr, 0.8),
        "min_ratio": (float, repr, 1.5),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source_text: str | None = None

    def get(self, section: str, key: str):
        return self.values[section][key]

    def __getitem__(self, dotted: str):
        s, _, k = dotted.partition(".")
        return self.values[s][k]

    def with_values(self, **dotted) -> "RunConfig":
        """Copy with ``section__key=value`` overrides, revalidated."""
        vals = {s: dict(d) for s, d in self.values.items()}
        for name, v in dotted.items():
            s, _, k = name.partition("__")
            vals[s][k] = v
        cfg = RunConfig(vals, None)
        cfg.validate()
        return cfg

    # ---- builders -----------------------------------------------------------
    def grid(self) -> Grid:
        return Grid(self["grid.N"], self["grid.L"])

    def spectrum(self, delta: float | None = None, grid: Grid | None = None) -> NoiseSpectrum:
        g = grid or self.grid()
        sp = build_spectrum(self["noise.alpha"], self["noise.delta"] if delta is None else delta, g)
        return sp if self["noise.scale"] == 1.0 else sp.with_scale(self["noise.scale"])

    def scheme(self, **overrides) -> SchemeConfig:
        kw = dict(
            dt=self["scheme.dt"],
            T=self["scheme.T"],
            noise=self.spectrum(),
            mode=self["scheme.mode"],
            extra_viscosity=self["scheme.extra_viscosity"],
            dealias=self["scheme.dealias"],
            record_every=self["scheme.record_every"],
            kappa=self["scheme.kappa"],
            p_list=tuple(self["output.p_list"]),
        )
        kw.update(overrides)
        return SchemeConfig(**kw)

    def initial_state(self, rescale: float = 1.0, mollify_delta="config", grid: Grid | None = None) -> SimState:
        g = grid or self.grid()
        md = self["initial_data.mollify_delta"] if mollify_delta == "config" else mollify_delta
        r = self["initial_data.rescale"] * rescale
        w = build_initial_field(InitialDataSpec(self["initial_data.omega"], self["initial_data.omega_params"], md, "vorticity", r), g)
        th = build_initial_field(InitialDataSpec(self["initial_data.theta"], self["initial_data.theta_params"], md, "temperature", r), g)
        return SimState(w, th, 0.0)

    # ---- validation / text ---------------------------------------------------
    def validate(self) -> None:
        """Cross-field checks, reported with the dotted field path."""
        def bad(path, msg):
            raise ConfigError(f"{path}: {msg}")

        v = self.values
        N, L = v["grid"]["N"], v["grid"]["L"]
        if N < 8 or N % 2:
            bad("grid.N", f"must be an even integer >= 8, got {N}")
        if not L > 0:
            bad("grid.L", f"must be positive, got {L}")
        a = v["noise"]["alpha"]
        if not 0 < a < 1:
            bad("noise.alpha", f"must lie in (0, 1), got {a}")
        if v["noise"]["delta"] < 0:
            bad("noise.delta", f"must be >= 0, got {v['noise']['delta']}")
        if v["noise"]["scale"] < 0:
            bad("noise.scale", "must be >= 0")
        s = v["scheme"]
        if not s["dt"] > 0:
            bad("scheme.dt", f"must be positive, got {s['dt']}")
        if not s["T"] >= s["dt"]:
            bad("scheme.T", f"must be >= scheme.dt, got {s['T']}")
        if abs(round(s["T"] / s["dt"]) * s["dt"] - s["T"]) > 1e-9 * s["T"]:
            bad("scheme.T", "must be a whole number of steps of scheme.dt")
        if s["mode"] not in ("ito-em", "strat-heun"):
            bad("scheme.mode", f"must be ito-em or strat-heun, got {s['mode']!r}")
        if s["extra_viscosity"] < 0:
            bad("scheme.extra_viscosity", "must be >= 0")
        if s["record_every"] < 1:
            bad("scheme.record_every", "must be >= 1")
        if not s["kappa"] > 0:
            bad("scheme.kappa", "must be positive")
        md = v["initial_data"]["mollify_delta"]
        if md is not None and not 0 < md <= 1:
            bad("initial_data.mollify_delta", f"must lie in (0, 1], got {md}")
        for p in v["output"]["p_list"]:
            if not p >= 1:
                bad("output.p_list", f"entries must be >= 1, got {p}")
        for t in v["output"]["snapshot_times"]:
            if not 0 <= t <= s["T"]:
                bad("output.snapshot_times", f"{t} lies outside [0, T]")
        st = v["study"]
        if st["paths"] < 1:
            bad("study.paths", "must be >= 1")
        dts = st["dt_ladder"]
        if dts and any(b >= a for a, b in zip(dts, dts[1:])):
            bad("study.dt_ladder", "must be strictly decreasing")
        ds = st["delta_ladder"]
        if ds:
            if any(b >= a for a, b in zip(ds, ds[1:])):
                bad("study.delta_ladder", "must be strictly decreasing")
            if any(not 0 < d <= 1 for d in ds):
                bad("study.delta_ladder", "entries must lie in (0, 1]")
            g = Grid(N, L)
            if 1.0 / ds[-1] > g.dealias_radius:
                bad("study.delta_ladder", f"1/delta = {1 / ds[-1]:g} exceeds the grid's dealiased radius {g.dealias_radius:g}")
        if any(r <= 0 for r in st["rescales"]):
            bad("study.rescales", "entries must be positive")

    def to_text(self) -> str:
        lines = []
        for sec, keys in _SCHEMA.items():
            lines.append(f"[{sec}]")
            for key, (_, fmt, _) in keys.items():
                lines.append(f"{key} = {fmt(self.values[sec][key])}")
            lines.append("")
        return "\n".join(lines)

    def fingerprint(self, seed: int | None = None) -> str:
        h = hashlib.sha256(self.to_text().encode())
        h.update(str(self["rng.seed"] if seed is None else seed).encode())
        return h.hexdigest()[:16]


def defaults() -> RunConfig:
    vals = {s: {k: d for k, (_, _, d) in keys.items()} for s, keys in _SCHEMA.items()}
    return RunConfig({s: {k: (dict(v) if isinstance(v, dict) else v) for k, v in d.items()} for s, d in vals.items()})


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = defaults()
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"{sec}: unknown section (expected one of {', '.join(_SCHEMA)})")
        for key, raw in cp.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
            parse = _SCHEMA[sec][key][0]
            try:
                cfg.values[sec][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{sec}.{key}: cannot parse {raw!r} ({exc})") from None
    cfg.source_text = text
    cfg.validate()
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))
