"""Render monotone-quantity curves and inequality margins from report JSON.

The input is the report file written by ``capmono audit`` (or
``grid-validate`` for the convergence panel).  Rendering is read-only: a
report is never modified, and two renders of the same report produce images
with identical plotted data extents (the extents are part of the returned
metadata so callers can check).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = ["PlotSpec", "PanelResult", "RenderResult", "ReportError", "load_report", "render"]

SUPPORTED_SCHEMAS = {1}
PANELS = ("F", "G", "margins", "convergence")


class ReportError(Exception):
    """Schema mismatch, missing curve data, or an unusable panel request."""


@dataclass(frozen=True)
class PlotSpec:
    reports: tuple[Path, ...]
    panels: tuple[str, ...]
    out_dir: Path
    fmt: str = "svg"

    def __post_init__(self):
        if not self.panels:
            raise ReportError("at least one panel must be requested")
        bad = [p for p in self.panels if p not in PANELS]
        if bad:
            raise ReportError(f"unknown panels {bad}; supported: {PANELS}")
        if self.fmt not in ("svg", "png"):
            raise ReportError(f"unsupported image format {self.fmt!r}")
        if not self.reports:
            raise ReportError("at least one report file is required")


@dataclass
class PanelResult:
    panel: str
    path: Path
    extents: dict  # label -> (t_min, t_max, y_min, y_max) or value lists
    overlays: dict = field(default_factory=dict)  # e.g. label -> asymptote value


@dataclass
class RenderResult:
    panels: list[PanelResult]

    @property
    def files(self) -> list[Path]:
        return [p.path for p in self.panels]


def load_report(path: Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"report file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"unparseable report {path}: {exc}") from None
    schema = data.get("schema_version")
    if schema not in SUPPORTED_SCHEMAS:
        raise ReportError(f"unsupported schema_version {schema!r} in {path}")
    if "body" not in data:
        raise ReportError(f"report {path} has no body")
    return data


def _label(path: Path, body: dict) -> str:
    kind = body.get("config", {}).get("metric", {}).get("kind", "?")
    return f"{path.stem} ({kind})"


def _curve_columns(path: Path, body: dict):
    curve = body.get("curve")
    if not curve:
        raise ReportError(f"report {path} has no curve section")
    t = [row["t"] for row in curve]
    reg = [bool(row["regular"]) for row in curve]
    return curve, t, reg


def _split_regular(t, y, reg):
    t_reg = [ti for ti, r in zip(t, reg) if r]
    y_reg = [yi for yi, r in zip(y, reg) if r]
    t_irr = [ti for ti, r in zip(t, reg) if not r]
    y_irr = [yi for yi, r in zip(y, reg) if not r]
    return (t_reg, y_reg), (t_irr, y_irr)


def _panel_curve(spec: PlotSpec, loaded, column: str, overlay: str) -> PanelResult:
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    extents = {}
    overlays = {}
    for path, data in loaded:
        body = data["body"]
        label = _label(path, body)
        curve, t, reg = _curve_columns(path, body)
        y = [row[column] for row in curve]
        (t_reg, y_reg), (t_irr, y_irr) = _split_regular(t, y, reg)
        line, = ax.plot(t_reg, y_reg, marker=".", markersize=3, linewidth=1.2, label=label)
        if t_irr:
            ax.plot(t_irr, y_irr, linestyle="none", marker="x", markersize=5,
                    color=line.get_color(), label=f"{label} (non-regular)")
        if overlay == "F_bound":
            bound = 8.0 * math.pi * (body["adm_mass"] - body["capacity"]["flux"])
            ax.axhline(bound, color=line.get_color(), linestyle="--", linewidth=0.9,
                       label=f"8 pi (m - C) = {bound:.4g}")
            overlays[label] = bound
        extents[label] = (min(t), max(t), min(y), max(y))
    if overlay == "zero":
        ax.axhline(0.0, color="k", linestyle="--", linewidth=0.9, label="limit 0")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(f"{column}(t)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    out = spec.out_dir / f"{column}.{spec.fmt}"
    fig.savefig(out)
    plt.close(fig)
    return PanelResult(panel=column, path=out, extents=extents, overlays=overlays)


def _panel_margins(spec: PlotSpec, loaded) -> PanelResult:
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    names = ["mass-capacity", "bray / C", "area-capacity / C", "level-set (rel, min)"]
    width = 0.8 / len(loaded)
    extents = {}
    for k, (path, data) in enumerate(loaded):
        body = data["body"]
        ineq = body.get("inequalities")
        if not ineq:
            raise ReportError(f"report {path} has no inequalities section")
        C = body["capacity"]["flux"]
        vals = [
            ineq["mass_capacity"]["margin"],
            ineq["bray"]["margin"] / C,
            ineq["area_capacity"]["margin"] / C,
            ineq["levelset_area"]["min_margin_rel"],
        ]
        pos = [i + k * width for i in range(len(names))]
        ax.bar(pos, vals, width=width, label=_label(path, body))
        extents[_label(path, body)] = tuple(vals)
    ax.axhline(0.0, color="k", linewidth=0.9)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(names))])
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("margin (dimensionless)")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    out = spec.out_dir / f"margins.{spec.fmt}"
    fig.savefig(out)
    plt.close(fig)
    return PanelResult(panel="margins", path=out, extents=extents)


def _panel_convergence(spec: PlotSpec, loaded) -> PanelResult:
    rows = [(p, d) for p, d in loaded if d.get("kind") == "grid_validate"]
    if not rows:
        raise ReportError("convergence panel requires a grid-validate report")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    extents = {}
    for path, data in rows:
        body = data["body"]
        orders = body["orders"]
        vals = [orders["C"], *orders["area"], *orders["I2"]]
        labels = ["C"] + [f"area L{i}" for i in range(len(orders["area"]))] + [
            f"I2 L{i}" for i in range(len(orders["I2"]))
        ]
        ax.bar(labels, vals, label=_label(path, body))
        extents[_label(path, body)] = tuple(vals)
    ax.axhline(0.8, color="r", linestyle="--", linewidth=0.9, label="order 0.8 gate")
    ax.set_ylabel("observed convergence order")
    ax.legend(fontsize=8)
    out = spec.out_dir / f"convergence.{spec.fmt}"
    fig.savefig(out)
    plt.close(fig)
    return PanelResult(panel="convergence", path=out, extents=extents)


def render(spec: PlotSpec) -> RenderResult:
    """Render one image per requested panel; returns paths and data extents."""
    loaded = [(Path(p), load_report(p)) for p in spec.reports]
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for panel in spec.panels:
        if panel == "F":
            results.append(_panel_curve(spec, loaded, "F", overlay="F_bound"))
        elif panel == "G":
            results.append(_panel_curve(spec, loaded, "G", overlay="zero"))
        elif panel == "margins":
            results.append(_panel_margins(spec, loaded))
        elif panel == "convergence":
            results.append(_panel_convergence(spec, loaded))
    return RenderResult(panels=results)
