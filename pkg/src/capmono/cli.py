"""Command line interface.

    capmono audit <cfg> [--out DIR] [--format json,csv]
    capmono sweep <cfg> --param <p> --values <v1,v2,...> [--workers N] [--out DIR]
    capmono grid-validate <cfg> [--out DIR]

Exit codes: 0 ok, 2 config error, 3 asserted theorem violation, 4 solver
failure.  Report JSON bodies are deterministic; rerunning a config reproduces
them byte for byte (meta blocks carry the runtime and are excluded from the
hashed body).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .inequalities import TheoremViolationError
from .metrics import MetricError
from .pipeline import (
    Report,
    body_hash,
    curve_csv_rows,
    run_audit,
    run_grid_validate,
    run_sweep,
)
from .potential.radial import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_THEOREM = 3
EXIT_SOLVER = 4


def _write_report(report: Report, out_dir: Path, stem: str, formats: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if "json" in formats:
        payload = report.to_json_dict()
        payload["body_sha256"] = report.hash
        (out_dir / f"{stem}.json").write_text(
            json.dumps(_stable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n",
            encoding="utf-8",
        )
    if "csv" in formats and "curve" in report.body:
        with open(out_dir / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(curve_csv_rows(report.body["curve"]))


def _stable(obj):
    if isinstance(obj, dict):
        return {k: _stable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _summary_lines(report: Report) -> list[str]:
    b = report.body
    lines = []
    if report.kind == "audit":
        cap = b["capacity"]
        lines.append(f"capacity: flux {cap['flux']:.12g}  energy {cap['energy']:.12g}")
        lines.append(f"adm mass: {b['adm_mass']:.12g}")
        hyp = b["hypothesis"]
        alpha = hyp["alpha_interval"]
        lines.append(
            "hypothesis: h2_trivial="
            + str(hyp["h2_trivial"]).lower()
            + "  alpha="
            + (f"[{alpha[0]:.6g}, {alpha[1]:.6g}]" if alpha else "infeasible")
        )
        iq_ = b["inequalities"]
        lines.append(
            f"margins: mass-capacity {iq_['mass_capacity']['margin']:.6g}"
            f"  bray {iq_['bray']['margin']:.6g}"
            f"  area-capacity {iq_['area_capacity']['margin']:.6g}"
        )
        mono = b["monotonicity"]
        lines.append(
            f"monotonicity: F violations {len(mono['f_violations'])}"
            f"  G violations {len(mono['g_violations'])}"
            f"  (asserted: F={str(mono['f_asserted']).lower()} G={str(mono['g_asserted']).lower()})"
        )
        lines.append(f"rigidity: {b['rigidity']['detail']}")
    elif report.kind == "grid_validate":
        orders = b["orders"]
        lines.append(f"C error orders: {orders['C']:.3g}; area {orders['area']}; I2 {orders['I2']}")
        lines.append("converged" if b["converged"] else "UNCONVERGED (order < 0.8)")
    lines.append(f"report body sha256: {report.hash}")
    lines.append(f"runtime: {report.runtime_seconds:.3f} s")
    return lines


def _cmd_audit(args) -> int:
    cfg = parse_config(args.config)
    report = run_audit(cfg)
    if args.out:
        _write_report(report, Path(args.out), "report", args.formats)
    for line in _summary_lines(report):
        print(line)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            values.append(float(chunk))
        except ValueError:
            raise ConfigError(f"sweep values: {chunk!r} is not a number") from None
    if not values:
        raise ConfigError("sweep: empty values list")
    result = run_sweep(cfg, args.param, values, workers=args.workers)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, item in enumerate(result["items"]):
            if item["ok"]:
                payload = dict(item["report"])
                payload["body_sha256"] = body_hash(payload["body"])
                (out_dir / f"report_{i:03d}.json").write_text(
                    json.dumps(_stable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8",
                )
        with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "value", "ok", "C", "m_adm", "bray_margin", "area_margin",
                "mass_capacity_margin", "alpha_feasible", "rigidity", "error",
            ])
            for row in result["summary"]:
                writer.writerow([
                    repr(row["value"]), int(row["ok"]),
                    repr(row.get("C", "")), repr(row.get("m_adm", "")),
                    repr(row.get("bray_margin", "")), repr(row.get("area_margin", "")),
                    repr(row.get("mass_capacity_margin", "")),
                    row.get("alpha_feasible", ""), row.get("rigidity", ""),
                    row.get("error", ""),
                ])
    n_ok = sum(1 for r in result["summary"] if r["ok"])
    print(f"sweep over {args.param}: {n_ok}/{len(result['summary'])} items ok")
    for row in result["summary"]:
        if row["ok"]:
            print(f"  {args.param}={row['value']:g}: C={row['C']:.9g} m={row['m_adm']:.9g} "
                  f"bray={row['bray_margin']:.6g} alpha={'yes' if row['alpha_feasible'] else 'no'}")
        else:
            print(f"  {args.param}={row['value']:g}: FAILED: {row['error']}")
    return EXIT_OK


def _cmd_grid_validate(args) -> int:
    cfg = parse_config(args.config)
    report = run_grid_validate(cfg)
    if args.out:
        _write_report(report, Path(args.out), "grid_validate", ["json"])
    for line in _summary_lines(report):
        print(line)
    return EXIT_OK


def _split_formats(raw: str) -> list[str]:
    formats = [f.strip() for f in raw.split(",") if f.strip()]
    for f in formats:
        if f not in ("json", "csv"):
            raise ConfigError(f"--format: unknown format {f!r}")
    return formats


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capmono",
        description="Monotonicity and inequality audits along capacitary level sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="run the full audit pipeline for one config")
    p_audit.add_argument("config")
    p_audit.add_argument("--out", default=None, help="output directory")
    p_audit.add_argument("--format", default="json,csv", dest="format")
    p_audit.set_defaults(func=_cmd_audit)

    p_sweep = sub.add_parser("sweep", help="audit over a range of one metric parameter")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated numbers")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", default="json,csv", dest="format")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_gv = sub.add_parser("grid-validate", help="grid refinement study at h and h/2")
    p_gv.add_argument("config")
    p_gv.add_argument("--out", default=None)
    p_gv.set_defaults(func=_cmd_grid_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if hasattr(args, "format"):
            args.formats = _split_formats(args.format)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TheoremViolationError as exc:
        print(f"THEOREM VIOLATION: {exc}", file=sys.stderr)
        return EXIT_THEOREM
    except (SolverError, MetricError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
