"""Command-line front end.

    ibflow simulate|solve|sweep|contour|compare|verify --config cfg.json
           [--out PATH] [--via flow|solver] [--paper-scale] [--seed N] [--jobs K]

The config JSON mirrors ExperimentConfig field names; flags override the
matching fields.  Exit code 0 iff every cell/suite passed its configured
tolerances.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .experiments import (
    ExperimentConfig,
    run_compare,
    run_contour,
    run_simulate,
    run_solve,
    run_sweep,
    run_verify,
    write_sweep_csv,
)
from .flow import export_trajectory_csv

KINDS = ("simulate", "solve", "sweep", "contour", "compare", "verify")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    payload = {}
    if args.config:
        with open(args.config) as fh:
            payload = json.load(fh)
    payload["kind"] = args.kind
    config = ExperimentConfig.from_json_dict(payload)
    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.via is not None:
        overrides["via"] = args.via
    if args.paper_scale:
        overrides["paper_scale"] = True
    if args.seed is not None:
        overrides["seed"] = args.seed
        if len(config.seeds) <= 1:
            overrides["seeds"] = (args.seed,)
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    return replace(config, **overrides) if overrides else config


def _write_json(payload: dict, path: str | None, default_name: str) -> str:
    path = path or default_name
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ibflow", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output path (file or directory)")
        p.add_argument("--via", choices=("flow", "solver"), default=None)
        p.add_argument("--paper-scale", action="store_true")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
    args = parser.parse_args(argv)
    config = _load_config(args)

    if args.kind == "sweep":
        cells = run_sweep(config)
        out = config.out or "sweep.csv"
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        write_sweep_csv(cells, out)
        ok = all(c.converged for c in cells)
        print(f"sweep: {len(cells)} cells -> {out} ({'all converged' if ok else 'non-converged cells present'})")
        return 0 if ok else 1

    if args.kind == "contour":
        panels = run_contour(config, config.out or ".")
        ok = all(p["min_at_wtilde0"] for p in panels)
        print(f"contour: {len(panels)} panels -> {config.out or '.'}")
        return 0 if ok else 1

    if args.kind == "compare":
        report = run_compare(config)
        path = _write_json(report, config.out, "compare.json")
        print(
            f"compare[{report['family']}]: rel_distance={report['rel_distance']:.3e} "
            f"-> {path} ({'pass' if report['pass'] else 'FAIL'})"
        )
        return 0 if report["pass"] else 1

    if args.kind == "verify":
        report = run_verify(config)
        path = _write_json(report, config.out, "verify.json")
        print(
            f"verify: unwarped defect={report['defect_unwarped']:.3e}, "
            f"warped defect={report['defect_warped']:.3e} -> {path} "
            f"({'pass' if report['pass'] else 'FAIL'})"
        )
        return 0 if report["pass"] else 1

    if args.kind == "simulate":
        traj, summary = run_simulate(config)
        out = config.out or "trajectory.csv"
        directory = os.path.dirname(out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        export_trajectory_csv(traj, out, include_predictor=config.d <= 64)
        print(
            f"simulate: t_final={summary['t_final']:.4g}, "
            f"feas={summary['feasibility_residual']:.3e} -> {out}"
        )
        return 0 if summary["pass"] else 1

    if args.kind == "solve":
        report = run_solve(config)
        path = _write_json(report.to_json_dict(), config.out, "solve.json")
        print(
            f"solve: feas={report.feasibility_residual:.3e}, "
            f"stat={report.stationarity_residual:.3e} -> {path}"
        )
        return 0 if report.converged else 1

    raise AssertionError(f"unhandled kind {args.kind}")


if __name__ == "__main__":
    sys.exit(main())
