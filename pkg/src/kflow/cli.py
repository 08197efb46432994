"""Command-line entry points: run, verify, sweep, density.

Run directories contain everything needed to reproduce and audit a run:
config.resolved.json (all defaults materialized), series.csv, summary.json,
snapshots/t_<index>.json, monitor.csv when density monitoring is on, and
error.json when anything failed.

Exit codes: 0 converged or reached t_end; 1 configuration or input error;
2 blow-up flagged; 3 degenerate grid.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .ambient import ChartPoint, FlatT4, get_model
from .config import load_json, resolve_run_config, resolve_sweep_spec
from .density import (
    DensityQuery,
    MonitorReport,
    calibrate_r0,
    monitor_regularity,
    parabolic_density,
    write_monitor,
)
from .diagnostics import summarize, write_series
from .errors import KflowError, ConfigError
from .flow import FlowConfig, run
from .immersion import load_grid, save_grid
from .surfaces import build_surface

_EXIT_BY_STOP = {"converged": 0, "reached-t-end": 0, "blowup-flag": 2, "degenerate-grid": 3}


def _output_dir(resolved):
    root = os.environ.get("KFLOW_OUTPUT_ROOT")
    out = Path(resolved["output_dir"])
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def build_model(resolved):
    if resolved["model"] == "flat-T4" and resolved["model_params"].get("periods"):
        return FlatT4(periods=resolved["model_params"]["periods"])
    return get_model(resolved["model"])


def build_grid(resolved, model):
    surf = resolved["surface"]
    params = dict(surf["params"])
    for key in ("origin", "a_dir", "b_dir", "extent", "center", "frequencies", "line_coeffs"):
        if key in params:
            params[key] = tuple(params[key])
    return build_surface(surf["family"], model, nu=surf["nu"], nv=surf["nv"], **params)


def flow_config_from(resolved):
    flow = resolved["flow"]
    red = flow["redistribution"]
    return FlowConfig(
        t_end=float(flow["t_end"]),
        cfl_factor=float(flow["cfl_factor"]),
        snapshot_stride=int(flow["snapshot_stride"]),
        diagnostics_stride=int(flow["diagnostics_stride"]),
        redistribution=None if red is None else (red["every"], red["strength"]),
        blowup_threshold=flow["blowup_threshold"],
        converged_H_tol=float(flow["converged_H_tol"]),
    )


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def execute_run(resolved, out_dir: Path):
    """Run the flow for a resolved config and persist the run directory.
    Returns (result, monitor_report_or_None)."""
    model = build_model(resolved)
    grid = build_grid(resolved, model)
    cfg = flow_config_from(resolved)
    t_start = time.perf_counter()
    result = run(grid, cfg)
    runtime = time.perf_counter() - t_start

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.resolved.json", resolved)
    write_series(out_dir / "series.csv", result.records)
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for i, (g, t) in enumerate(result.snapshots):
        save_grid(snap_dir / f"t_{i}.json", g, t=t)

    report = None
    density = resolved["density"]
    if density["monitor"]:
        r0 = density["r0"]
        if r0 is None:
            r0 = calibrate_r0(grid, density["eps0"], seed=resolved["seed"])
        report = monitor_regularity(result.snapshots, r0, density["eps0"])
        write_monitor(out_dir / "monitor.csv", report)

    lam = model.einstein_constant
    summary = {
        "stop_reason": result.stop_reason,
        "holomorphicity_gap": result.holomorphicity_gap,
        "runtime_seconds": runtime,
        "steps": result.state.step_index,
        "t_final": result.state.t,
        "einstein_constant": lam,
        "n_records": len(result.records),
        "n_snapshots": len(result.snapshots),
        "series_summary": dataclasses.asdict(summarize(result.records, lam)),
    }
    if report is not None:
        summary["monitor"] = {
            "max_phi": report.max_phi,
            "n_exceedances": report.n_exceedances,
            "r0": report.r0,
            "eps0": report.eps0,
        }
    _write_json(out_dir / "summary.json", summary)
    return result, report


def cmd_run(path) -> int:
    try:
        doc = load_json(path)
        resolved = resolve_run_config(doc)
    except ConfigError as exc:
        # best effort: leave an error record in the intended output directory
        if isinstance(locals().get("doc"), dict) and isinstance(doc.get("output_dir"), str):
            try:
                out = Path(doc["output_dir"])
                out.mkdir(parents=True, exist_ok=True)
                _write_json(out / "error.json", {"error": "ConfigError", "message": str(exc)})
            except OSError:
                pass
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out_dir = _output_dir(resolved)
    try:
        result, _ = execute_run(resolved, out_dir)
    except KflowError as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "error.json", {"error": type(exc).__name__, "message": str(exc)})
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    code = _EXIT_BY_STOP[result.stop_reason]
    if code:
        _write_json(
            out_dir / "error.json",
            {"error": "stop-reason", "message": result.stop_reason},
        )
    print(f"{result.stop_reason}: t = {result.state.t:.6g} after {result.state.step_index} steps")
    return code


def cmd_verify(level) -> int:
    from .verify import run_battery

    results = run_battery(level)
    width = max(len(name) for name, _, _ in results)
    all_ok = True
    for name, ok, detail in results:
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    print(f"{'all checks passed' if all_ok else 'FAILURES present'}")
    return 0 if all_ok else 1


def cmd_sweep(path) -> int:
    try:
        spec = resolve_sweep_spec(load_json(path))
    except ConfigError as exc:
        print(f"sweep spec error: {exc}", file=sys.stderr)
        return 1
    base = spec["base"]
    out_root = _output_dir(base)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    any_converged = False
    for delta in spec["deltas"]:
        resolved = json.loads(json.dumps(base))
        resolved["surface"]["params"]["delta"] = delta
        resolved["density"]["monitor"] = True
        resolved["density"]["eps0"] = spec["eps0"]
        run_dir = out_root / f"delta_{delta:g}"
        resolved["output_dir"] = str(run_dir)
        row = {"delta": delta}
        try:
            result, report = execute_run(resolved, run_dir)
            rec0 = result.records[0]
            row.update(
                C0=rec0.V,
                converged=result.stop_reason == "converged",
                stop_reason=result.stop_reason,
                gap=result.holomorphicity_gap,
                min_cos_alpha=min(r.min_cos_alpha for r in result.records),
                supA_max=max(r.supA for r in result.records),
                max_phi=report.max_phi if report else None,
                n_exceedances=report.n_exceedances if report else None,
                r0=report.r0 if report else None,
            )
            any_converged |= row["converged"]
        except KflowError as exc:
            row.update(stop_reason=f"error:{type(exc).__name__}", converged=False)
        rows.append(row)

    import csv

    cols = [
        "delta", "C0", "converged", "stop_reason", "gap", "min_cos_alpha",
        "supA_max", "max_phi", "n_exceedances", "r0",
    ]
    with open(out_root / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow({c: row.get(c) for c in cols})
    good = [r["delta"] for r in rows if r.get("converged") and not r.get("n_exceedances")]
    if good:
        print(f"largest amplitude converged without density exceedance: {max(good):g}")
    for row in rows:
        print(row)
    return 0 if any_converged else 1


def cmd_density(run_dir, queries_path=None) -> int:
    run_dir = Path(run_dir)
    snap_dir = run_dir / "snapshots"
    snaps = sorted(snap_dir.glob("t_*.json"), key=lambda p: int(p.stem.split("_")[1]))
    if not snaps:
        print(f"no snapshots in {run_dir}", file=sys.stderr)
        return 1
    try:
        resolved = load_json(run_dir / "config.resolved.json")
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    model = build_model(resolved)
    states = []
    for p in snaps:
        g, t = load_grid(p, model=model)
        states.append((g, float(t)))

    import csv

    rows = []
    if queries_path is None:
        summary_path = run_dir / "summary.json"
        r0 = None
        if summary_path.exists():
            with open(summary_path) as fh:
                r0 = json.load(fh).get("monitor", {}).get("r0")
        if r0 is None:
            r0 = calibrate_r0(states[0][0], resolved["density"]["eps0"], seed=resolved["seed"])
        report = monitor_regularity(states, r0, resolved["density"]["eps0"])
        rows = [
            {"x0_index": r.x0_index, "t0": r.t0, "r": r0, "t_used": r.t0 - r0 * r0, "phi": r.phi}
            for r in report.rows
        ]
    else:
        qdoc = load_json(queries_path)
        for i, q in enumerate(qdoc):
            x0 = ChartPoint(int(q.get("chart", 0)), np.asarray(q["x0"], dtype=float))
            t0, r = float(q["t0"]), float(q["r"])
            usable = [(g, t) for g, t in states if t <= t0 - r * r]
            if not usable:
                rows.append({"x0_index": i, "t0": t0, "r": r, "t_used": "", "phi": "not-computable"})
                continue
            g, t = usable[-1]
            rows.append(
                {
                    "x0_index": i,
                    "t0": t0,
                    "r": r,
                    "t_used": t,
                    "phi": parabolic_density(g, t, DensityQuery(x0=x0, t0=t0, r=r)),
                }
            )
    with open(run_dir / "density_report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["x0_index", "t0", "r", "t_used", "phi"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} density rows to {run_dir / 'density_report.csv'}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kflow",
        description="Mean curvature flow of surfaces in Kähler-Einstein 4-manifolds: "
        "runs, verification batteries, perturbation sweeps, density reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a flow run from a JSON config")
    p_run.add_argument("config", help="path to run config JSON")
    p_ver = sub.add_parser("verify", help="run the identity battery")
    p_ver.add_argument("--level", choices=("quick", "full"), default="quick")
    p_swp = sub.add_parser("sweep", help="perturbation-amplitude sweep")
    p_swp.add_argument("spec", help="path to sweep spec JSON")
    p_den = sub.add_parser("density", help="density report for an existing run directory")
    p_den.add_argument("run_dir")
    p_den.add_argument("--queries", default=None, help="JSON list of {x0, chart, t0, r}")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "verify":
        return cmd_verify(args.level)
    if args.command == "sweep":
        return cmd_sweep(args.spec)
    return cmd_density(args.run_dir, args.queries)


if __name__ == "__main__":
    sys.exit(main())
