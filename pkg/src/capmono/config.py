"""Experiment configuration: flat sectioned key=value files (INI style).

Example::

    [metric]
    kind = conformal_radial        ; schwarzschild | flat | conformal_radial | warped
    r0 = 1.0
    phi = "1 + c1/r + c2/r^2"      ; quoted Expr string over r
    params = c1=1.0, c2=-0.1       ; name=value substitutions

    [solver]
    mode = radial                  ; radial | grid3d
    tol = 1e-12
    L = 8.0                        ; grid3d only: box half-width
    h = 0.125                      ; grid3d only: spacing

    [sweep]
    points = 200                   ; level-set samples along the curve
    t_max_factor = 1000            ; curve extends to t_max_factor * C

    [flags]
    h2_trivial = true              ; declared topology H2(M, dM; Z) = 0
    assert_via_weak_condition = false

Errors carry the offending ``section.key`` path.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .expr import ExprError
from .metrics import ConformalMetric, RadialMetric, conformal_radial, flat_exterior, parse, schwarzschild, warped

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_text", "build_metric"]

METRIC_KINDS = ("schwarzschild", "flat", "conformal_radial", "warped")
SOLVER_MODES = ("radial", "grid3d")


class ConfigError(Exception):
    """Malformed configuration; the message names the offending key path."""


@dataclass
class ExperimentConfig:
    kind: str
    m: float | None = None
    r0: float | None = None
    phi_src: str | None = None
    a_src: str | None = None
    f_src: str | None = None
    params: dict[str, float] = field(default_factory=dict)

    mode: str = "radial"
    tol: float = 1e-12
    L: float | None = None
    h: float | None = None

    points: int | None = None
    t_max_factor: float = 1000.0

    h2_trivial: bool = False
    assert_via_weak_condition: bool = False

    # [tolerances] section; defaults match the per-module constants
    r_max_factor: float = 1000.0
    tol_R: float = 1e-10
    tol_rig: float = 1e-6
    mono_tol: float | None = None  # None: 1e-8 (1+|F|) radial, 3x error estimate grid
    mono_bound_tol: float = 1e-6

    source: str = "<memory>"

    def echo(self) -> dict:
        """Config image embedded in reports (deterministic)."""
        out = {
            "metric": {"kind": self.kind},
            "solver": {"mode": self.mode, "tol": self.tol},
            "sweep": {"points": self.sweep_points(), "t_max_factor": self.t_max_factor},
            "flags": {
                "h2_trivial": self.h2_trivial,
                "assert_via_weak_condition": self.assert_via_weak_condition,
            },
            "tolerances": {
                "r_max_factor": self.r_max_factor,
                "tol_R": self.tol_R,
                "tol_rig": self.tol_rig,
                "mono_tol": self.mono_tol,
                "mono_bound_tol": self.mono_bound_tol,
            },
        }
        for key in ("m", "r0", "phi_src", "a_src", "f_src"):
            val = getattr(self, key)
            if val is not None:
                out["metric"][key.removesuffix("_src")] = val
        if self.params:
            out["metric"]["params"] = dict(sorted(self.params.items()))
        if self.mode == "grid3d":
            out["solver"]["L"] = self.L
            out["solver"]["h"] = self.h
        return out

    def sweep_points(self) -> int:
        if self.points is not None:
            return self.points
        return 12 if self.mode == "grid3d" else 200


def _strip_quotes(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


def _parse_params(raw: str, path: str) -> dict[str, float]:
    out: dict[str, float] = {}
    raw = raw.strip()
    if not raw:
        return out
    for item in raw.split(","):
        if "=" not in item:
            raise ConfigError(f"{path}: expected name=value pairs, got {item.strip()!r}")
        name, val = item.split("=", 1)
        name = name.strip()
        try:
            out[name] = float(val.strip())
        except ValueError:
            raise ConfigError(f"{path}: parameter {name!r} has non-numeric value {val.strip()!r}") from None
    return out


class _Section:
    def __init__(self, cp: configparser.ConfigParser, name: str):
        self.cp = cp
        self.name = name

    def has(self, key: str) -> bool:
        return self.cp.has_option(self.name, key)

    def raw(self, key: str) -> str:
        return self.cp.get(self.name, key)

    def require(self, key: str) -> str:
        if not self.has(key):
            raise ConfigError(f"{self.name}.{key}: missing required key")
        return self.raw(key)

    def number(self, key: str, default=None):
        if not self.has(key):
            if default is None:
                raise ConfigError(f"{self.name}.{key}: missing required key")
            return default
        try:
            return float(self.raw(key))
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected a number, got {self.raw(key)!r}") from None

    def integer(self, key: str, default=None):
        if not self.has(key):
            return default
        try:
            return int(self.raw(key))
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected an integer, got {self.raw(key)!r}") from None

    def boolean(self, key: str, default: bool) -> bool:
        if not self.has(key):
            return default
        try:
            return self.cp.getboolean(self.name, key)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected a boolean, got {self.raw(key)!r}") from None


def parse_config_text(text: str, source: str = "<memory>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config {source}: {exc}") from None

    if not cp.has_section("metric"):
        raise ConfigError("metric: missing required section")
    met = _Section(cp, "metric")
    kind = met.require("kind").strip()
    if kind not in METRIC_KINDS:
        raise ConfigError(f"metric.kind: unknown kind {kind!r}, expected one of {METRIC_KINDS}")

    cfg = ExperimentConfig(kind=kind, source=source)
    cfg.params = _parse_params(met.raw("params"), "metric.params") if met.has("params") else {}
    if kind == "schwarzschild":
        cfg.m = met.number("m")
        if cfg.m <= 0:
            raise ConfigError(f"metric.m: mass must be positive, got {cfg.m}")
    else:
        cfg.r0 = met.number("r0")
        if cfg.r0 <= 0:
            raise ConfigError(f"metric.r0: inner radius must be positive, got {cfg.r0}")
    if kind == "conformal_radial":
        cfg.phi_src = _strip_quotes(met.require("phi"))
    if kind == "warped":
        cfg.a_src = _strip_quotes(met.require("a"))
        cfg.f_src = _strip_quotes(met.require("f"))

    if cp.has_section("solver"):
        sol = _Section(cp, "solver")
        cfg.mode = sol.raw("mode").strip() if sol.has("mode") else "radial"
        if cfg.mode not in SOLVER_MODES:
            raise ConfigError(f"solver.mode: unknown mode {cfg.mode!r}, expected one of {SOLVER_MODES}")
        cfg.tol = sol.number("tol", default=1e-12 if cfg.mode == "radial" else 1e-6)
        if cfg.tol <= 0:
            raise ConfigError(f"solver.tol: must be positive, got {cfg.tol}")
        if cfg.mode == "grid3d":
            cfg.L = sol.number("L")
            cfg.h = sol.number("h")
            if cfg.L <= 0 or cfg.h <= 0:
                raise ConfigError("solver.L/solver.h: must be positive in grid3d mode")
    elif cfg.mode == "grid3d":
        raise ConfigError("solver: grid3d mode requires a [solver] section with L and h")
    if cfg.mode == "grid3d" and cfg.tol == 1e-12:
        cfg.tol = 1e-6

    if cfg.mode == "grid3d" and cfg.kind == "warped":
        raise ConfigError("solver.mode: grid3d requires a conformal metric (schwarzschild, flat or conformal_radial)")

    if cp.has_section("sweep"):
        sw = _Section(cp, "sweep")
        cfg.points = sw.integer("points", default=None)
        if cfg.points is not None and cfg.points < 2:
            raise ConfigError(f"sweep.points: need at least 2, got {cfg.points}")
        cfg.t_max_factor = sw.number("t_max_factor", default=1000.0)
        if cfg.t_max_factor <= 1:
            raise ConfigError(f"sweep.t_max_factor: must exceed 1, got {cfg.t_max_factor}")

    if cp.has_section("flags"):
        fl = _Section(cp, "flags")
        cfg.h2_trivial = fl.boolean("h2_trivial", default=False)
        cfg.assert_via_weak_condition = fl.boolean("assert_via_weak_condition", default=False)

    if cp.has_section("tolerances"):
        tl = _Section(cp, "tolerances")
        cfg.r_max_factor = tl.number("r_max_factor", default=1000.0)
        cfg.tol_R = tl.number("tol_R", default=1e-10)
        cfg.tol_rig = tl.number("tol_rig", default=1e-6)
        cfg.mono_bound_tol = tl.number("mono_bound_tol", default=1e-6)
        if tl.has("mono_tol"):
            cfg.mono_tol = tl.number("mono_tol")
        for key in ("r_max_factor", "tol_R", "tol_rig", "mono_bound_tol"):
            if getattr(cfg, key) <= 0:
                raise ConfigError(f"tolerances.{key}: must be positive")
        if cfg.r_max_factor <= 1:
            raise ConfigError("tolerances.r_max_factor: must exceed 1")

    # early syntax check of expression strings so config errors surface as such
    try:
        build_metric(cfg)
    except ExprError as exc:
        raise ConfigError(f"metric expression: {exc}") from None
    return cfg


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(p))


def build_metric(cfg: ExperimentConfig) -> RadialMetric | ConformalMetric:
    """Construct the metric object; grid mode always yields a ConformalMetric."""
    if cfg.kind == "schwarzschild":
        return schwarzschild(cfg.m)
    if cfg.kind == "flat":
        if cfg.mode == "grid3d":
            return ConformalMetric(cfg.r0, parse("1", {"r"}))
        return flat_exterior(cfg.r0)
    if cfg.kind == "conformal_radial":
        return conformal_radial(cfg.phi_src, cfg.r0, cfg.params)
    if cfg.kind == "warped":
        return warped(cfg.a_src, cfg.f_src, cfg.r0, cfg.params)
    raise ConfigError(f"metric.kind: unknown kind {cfg.kind!r}")
