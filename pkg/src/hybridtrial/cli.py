"""Command-line front end.

Three subcommands: ``simulate`` (operating-characteristic grid),
``calibrate`` (tuning grid search), and ``plan`` (design-benefit
projection). Every run writes its CSV outputs atomically plus a
``manifest.json`` recording the resolved-config digest, seed, versions,
wall-clock time, and per-scenario Monte Carlo standard errors.

Exit codes: 0 success, 2 config error, 3 infeasible design/plan,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    PRESETS,
    ConfigError,
    apply_preset,
    build_planner_inputs,
    build_scenario,
    config_digest,
    load_config,
    resolve_config,
    scenario_overrides,
)
from .datagen import InfeasibleDesignError
from .methods import Method, TuningParameters
from .planner import build_plan, project_events, randomized_patients, summarize_benefits
from .runner import calibrate_tuning, run_grid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4

ENV_THREADS = "HYBRIDTRIAL_THREADS"

OC_COLUMNS = [
    "hr_exp",
    "hr_rwd",
    "method",
    "tuning_value",
    "n_reps",
    "rejection_rate",
    "rejection_mc_se",
    "mse",
    "bias",
    "mean_eff_events",
    "sd_eff_events",
    "n_excluded",
]


def _fmt(value) -> str:
    """Locale-independent 6-significant-digit cell formatting."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Write the fully materialized table, then move it into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out_dir: Path, payload: dict) -> None:
    (out_dir / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _default_threads() -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _parse_grid_spec(spec: str) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive endpoints) or an explicit comma list."""
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise ValueError("need step > 0 and stop >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 12) for i in range(n))
        return tuple(float(p) for p in spec.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"grid: cannot parse {spec!r}: {exc}") from exc


def cmd_simulate(args) -> int:
    started = time.time()
    cfg = apply_preset(load_config(args.config), args.preset)
    resolved = scenario_overrides(resolve_config(cfg), args.seed, args.reps)
    scenario = build_scenario(resolved)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = run_grid(scenario, n_workers=args.threads)

    rows = []
    mc_se = []
    for (hr_exp, hr_rwd, method), oc in grid.ordered_items():
        rows.append(
            [
                hr_exp,
                hr_rwd,
                method.value,
                scenario.tuning.value_for(method),
                oc.n_replicates,
                oc.rejection_rate,
                oc.rejection_mc_se,
                oc.mse_log_hr,
                oc.bias_log_hr,
                oc.mean_effective_events,
                oc.sd_effective_events,
                oc.n_excluded,
            ]
        )
        mc_se.append(
            {
                "hr_exp": hr_exp,
                "hr_rwd": hr_rwd,
                "method": method.value,
                "rejection_mc_se": round(oc.rejection_mc_se, 8),
                "n_excluded": oc.n_excluded,
            }
        )
    _write_csv(out_dir / "oc_grid.csv", OC_COLUMNS, rows)
    _write_manifest(
        out_dir,
        {
            "schema_version": 1,
            "command": "simulate",
            "artifact_version": __version__,
            "config_digest": config_digest(resolved),
            "master_seed": resolved["master_seed"],
            "threads": args.threads,
            "preset": args.preset,
            "wall_clock_seconds": round(time.time() - started, 3),
            "outputs": ["oc_grid.csv"],
            "exclusions_total": sum(r["n_excluded"] for r in mc_se),
            "under_target_replicates": {
                f"{k[0]:g},{k[1]:g}": v for k, v in sorted(grid.under_target.items())
            },
            "per_scenario": mc_se,
        },
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.time()
    cfg = apply_preset(load_config(args.config), args.preset)
    resolved = scenario_overrides(resolve_config(cfg), args.seed, args.reps)
    scenario = build_scenario(resolved)
    try:
        method = Method(args.method)
    except ValueError:
        raise ConfigError(
            f"method: unknown method {args.method!r} (choose from {[m.value for m in Method]})"
        ) from None
    grid_values = _parse_grid_spec(args.grid)
    if not grid_values:
        raise ConfigError("grid: empty parameter grid")
    power_scenario = tuple(float(x) for x in args.power_scenario.split(","))
    if len(power_scenario) != 2:
        raise ConfigError("power-scenario: expected HR_EXP,HR_RWD")
    t1e_scenarios = _parse_grid_spec(args.t1e_scenarios)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = calibrate_tuning(
        scenario,
        method,
        grid_values,
        target_power=args.target_power,
        power_scenario=power_scenario,  # type: ignore[arg-type]
        t1e_scenarios=t1e_scenarios,
        n_workers=args.threads,
    )

    header = ["candidate_value", "power", "power_mc_se", "max_type1_error", "max_type1_error_mc_se"]
    header += [f"t1e_at_{hr:g}" for hr in t1e_scenarios]
    header += ["meets_target", "selected"]
    rows = []
    for row in report.rows:
        cells = [row.value, row.power, row.power_mc_se, row.max_t1e, row.max_t1e_mc_se]
        cells += [row.t1e_by_scenario[hr] for hr in t1e_scenarios]
        cells += [row.meets_target, row.value == report.selected]
        rows.append(cells)
    _write_csv(out_dir / "calibration_table.csv", header, rows)
    _write_manifest(
        out_dir,
        {
            "schema_version": 1,
            "command": "calibrate",
            "artifact_version": __version__,
            "config_digest": config_digest(resolved),
            "master_seed": resolved["master_seed"],
            "threads": args.threads,
            "preset": args.preset,
            "wall_clock_seconds": round(time.time() - started, 3),
            "outputs": ["calibration_table.csv"],
            "method": method.value,
            "parameter_grid": list(grid_values),
            "target_power": args.target_power,
            "selected": report.selected,
            "feasible": report.feasible,
            "rationale": report.rationale,
            "per_candidate": [
                {
                    "value": row.value,
                    "power_mc_se": round(row.power_mc_se, 8),
                    "max_type1_error_mc_se": round(row.max_t1e_mc_se, 8),
                }
                for row in report.rows
            ],
        },
    )
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_plan(args) -> int:
    started = time.time()
    resolved = resolve_config(load_config(args.config))
    hybrid_inputs = build_planner_inputs(resolved)
    original_inputs = dataclasses.replace(hybrid_inputs, external_rate=0.0, t_historic=0.0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    original = build_plan(original_inputs)
    hybrid = build_plan(hybrid_inputs)
    benefits = summarize_benefits(original, hybrid)

    header = [
        "design",
        "n_randomized",
        "n_external_effective",
        "randomization_ratio",
        "rate_experimental",
        "rate_control",
        "t_enroll_months",
        "t_cutoff_months",
        "events_experimental",
        "events_trial_control",
        "events_external",
        "events_total",
    ]
    rows = []
    for name, plan, ev in (
        ("original", original, benefits.original_events_at_cutoff),
        ("hybrid", hybrid, benefits.hybrid_events_at_cutoff),
    ):
        rows.append(
            [
                name,
                randomized_patients(plan),
                plan.n_external_historic + plan.n_external_concurrent,
                plan.final_ratio,
                plan.rate_experimental,
                plan.rate_control,
                plan.t_enroll,
                plan.t_cutoff,
                ev.experimental,
                ev.trial_control,
                ev.external,
                ev.total,
            ]
        )
    rows.append(
        [
            "saving",
            benefits.fewer_randomized_patients,
            None,
            None,
            None,
            None,
            benefits.enrollment_saving_months,
            benefits.cutoff_saving_months,
            None,
            None,
            None,
            None,
        ]
    )
    _write_csv(out_dir / "plan_report.csv", header, rows)

    horizon = math.ceil(max(original.t_cutoff, hybrid.t_cutoff)) + 1.0
    times = np.arange(0.0, horizon + 1e-9, 0.5)
    curve_rows = []
    for name, plan in (("original", original), ("hybrid", hybrid)):
        for t in times:
            ev = project_events(plan, plan.inputs, float(t))
            curve_rows.append([name, float(t), ev.experimental, ev.trial_control, ev.external])
    _write_csv(
        out_dir / "event_curves.csv",
        ["design", "t_months", "e_events_experimental", "e_events_trial_control", "e_events_external"],
        curve_rows,
    )
    _write_manifest(
        out_dir,
        {
            "schema_version": 1,
            "command": "plan",
            "artifact_version": __version__,
            "config_digest": config_digest(resolved),
            "master_seed": resolved["master_seed"],
            "wall_clock_seconds": round(time.time() - started, 3),
            "outputs": ["plan_report.csv", "event_curves.csv"],
            "hybrid_ratio": hybrid.final_ratio,
            "enrollment_saving_months": benefits.enrollment_saving_months,
            "cutoff_saving_months": benefits.cutoff_saving_months,
            "fewer_randomized_patients": benefits.fewer_randomized_patients,
        },
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridtrial",
        description="Hybrid controlled trial simulation, calibration, and design planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the scenario grid and write oc_grid.csv")
    sim.add_argument("--config", required=True, help="path to JSON config")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--preset", choices=sorted(PRESET_NAMES), default=None)
    sim.add_argument("--seed", type=int, default=None, help="override master_seed")
    sim.add_argument("--reps", type=int, default=None, help="override n_replicates")
    sim.add_argument("--threads", type=int, default=_default_threads())
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="grid-search a method's tuning parameter")
    cal.add_argument("--config", required=True)
    cal.add_argument("--out", required=True)
    cal.add_argument("--method", required=True, help="method whose tuning parameter to search")
    cal.add_argument("--grid", required=True, help="start:stop:step or comma-separated values")
    cal.add_argument("--target-power", type=float, default=0.88)
    cal.add_argument("--power-scenario", default="0.78,1.0", help="HR_EXP,HR_RWD for the power cell")
    cal.add_argument(
        "--t1e-scenarios",
        default="1.0,1.1,1.2,1.3,1.5,2.0",
        help="hr_rwd values (at hr_exp=1) over which max type I error is taken",
    )
    cal.add_argument("--preset", choices=sorted(PRESET_NAMES), default=None)
    cal.add_argument("--seed", type=int, default=None)
    cal.add_argument("--reps", type=int, default=None)
    cal.add_argument("--threads", type=int, default=_default_threads())
    cal.set_defaults(func=cmd_calibrate)

    plan = sub.add_parser("plan", help="project design benefits and event curves")
    plan.add_argument("--config", required=True)
    plan.add_argument("--out", required=True)
    plan.set_defaults(func=cmd_plan)
    return parser


PRESET_NAMES = set(PRESETS)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleDesignError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
