"""Command-line entry point: ``gridattacksim {run,metrics,compare,plot}``.

Exit codes: 0 success, 1 a run finished with non-converged steps,
2 bad usage or unreadable/invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .attacks import ScheduleError, load_schedule
from .caseio import CaseParseError, load_case
from .logio import SchemaMismatch, delta_to_csv, read_log, write_run
from .metrics import compute_metrics
from .powerflow import InvalidCase, PowerFlowOptions, ZeroImpedanceBranch
from .simulator import SimConfig, compare_runs, run, run_with_baseline
from .svgplot import PLOT_KINDS, PlotError, render
from .validation import ShapeMismatch

log = logging.getLogger("gridattacksim")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class InputError(Exception):
    """Anything that should end the process with exit code 2."""


def _parse_buses(text: str | None):
    if not text:
        return None
    try:
        return [int(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise InputError(f"--buses must be a comma-separated list of bus ids, got {text!r}") from None


def cmd_run(args) -> int:
    try:
        case = load_case(args.case)
    except FileNotFoundError:
        raise InputError(f"case file not found: {args.case}") from None
    try:
        schedule = load_schedule(args.schedule)
    except FileNotFoundError:
        raise InputError(f"schedule file not found: {args.schedule}") from None
    try:
        config = SimConfig(
            n_steps=args.steps,
            seed=args.seed,
            noise_amplitude=args.sigma,
            schedule=schedule,
            pf_options=PowerFlowOptions(enforce_q_lims=not args.no_qlims),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None

    log.debug("running %s with %d attack window(s)", case.name or args.case, len(schedule))
    if args.with_baseline:
        attacked, baseline = run_with_baseline(case, config)
        outputs = [(attacked, args.out), (baseline, f"{args.out}_baseline")]
    else:
        outputs = [(run(case, config), args.out)]

    failed = 0
    for sim_log, prefix in outputs:
        artifact = write_run(sim_log, prefix, case_name=case.name)
        bad = [f.t for f in sim_log.frames if not f.converged]
        failed += len(bad)
        print(f"wrote {artifact.csv_path} ({sim_log.n_steps} steps) and {artifact.sidecar_path}")
        if bad:
            print(f"warning: {len(bad)} step(s) did not converge: {bad[:10]}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def _summary_lines(m) -> list[str]:
    return [
        f"side:                  {m.side}",
        f"mean RMS deviation:    {m.mean_rms_dev:.6f} p.u.",
        f"max deviation:         {m.max_dev:.6f} p.u.",
        f"violations (true):     {m.violation_count_true}",
        f"violations (measured): {m.violation_count_meas}",
        f"average losses:        {m.avg_losses_mw:.4f} MW",
        f"PV->PQ switch events:  {m.switch_event_total}",
    ]


def cmd_metrics(args) -> int:
    sim_log = read_log(args.csv)
    baseline = read_log(args.baseline) if args.baseline else None
    m = compute_metrics(sim_log, args.side, baseline=baseline, threshold=args.threshold)
    if args.json:
        print(json.dumps(m.to_dict(), indent=2, sort_keys=True))
    else:
        print("\n".join(_summary_lines(m)))
        if baseline is not None:
            print(f"anomalous steps:       {m.anomaly_steps}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_log(args.a), read_log(args.b)
    delta = compare_runs(a, b)
    out = Path(f"{args.out}_delta.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(delta_to_csv(delta, a.column("hour")), encoding="utf-8")
    moved = sorted({int(t) for t, row in zip(delta.t, abs(delta.vm_true)) if row.max() > 0})
    print(f"wrote {out}")
    print(f"max |dV| true:     {float(abs(delta.vm_true).max()):.6f} p.u.")
    print(f"max |dV| measured: {float(abs(delta.vm_meas).max()):.6f} p.u.")
    print(f"steps with true-voltage change: {len(moved)}")
    print(f"mean loss delta:   {float(delta.losses_mw.mean()):.6f} MW")
    return EXIT_OK


def cmd_plot(args) -> int:
    logs = [read_log(p) for p in args.csv]
    svg = render(args.kind, logs, buses=_parse_buses(args.buses), side=args.side,
                 threshold=args.threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridattacksim",
        description="Time-stepped DoS/DoD/FDI attack simulation on AC power-flow cases.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write CSV + JSON sidecar")
    p.add_argument("--case", default="builtin:case14",
                   help="MATPOWER case file, or builtin:case14 (default)")
    p.add_argument("--schedule", default="default",
                   help="attack schedule JSON path, 'default' (DoS, FDI, DoD scenario) or 'none' (baseline)")
    p.add_argument("--steps", type=int, default=144)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0, help="uniform load-noise half-range")
    p.add_argument("--no-qlims", action="store_true", help="disable PV->PQ switching")
    p.add_argument("--with-baseline", action="store_true",
                   help="also run the attack-free twin, written to <out>_baseline")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="summarise a run CSV")
    p.add_argument("csv")
    p.add_argument("--side", choices=("true", "meas"), default="true")
    p.add_argument("--baseline", help="baseline CSV for anomaly flags")
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="per-step deltas between two run CSVs (a - b)")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True, help="output prefix; writes <out>_delta.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="render an SVG chart")
    p.add_argument("kind", help="one of: " + ", ".join(PLOT_KINDS))
    p.add_argument("csv", nargs="+", help="attacked CSV, optionally followed by a baseline CSV")
    p.add_argument("--buses", help="comma-separated bus ids, e.g. 1,5,7,9")
    p.add_argument("--side", choices=("true", "meas", "both"), default="true")
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--out", required=True, help="SVG path")
    p.set_defaults(func=cmd_plot)
    return parser


_INPUT_ERRORS = (InputError, CaseParseError, ScheduleError, SchemaMismatch, ShapeMismatch,
                 PlotError, InvalidCase, ZeroImpedanceBranch, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        if isinstance(exc, FileNotFoundError) and exc.filename:
            msg = f"file not found: {exc.filename}"
        else:
            msg = str(exc)
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
