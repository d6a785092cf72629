"""Command-line entry point: ``tricolor {plan,run,analyze,phase,validate}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .plan import OUTPUT_ENV, PlanError, load_plan
from .study import (StudyError, analyze_group, load_manifest, phase_diagram, run_study, select_jobs,
                    write_manifest)
from .validation import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_HALTED = 0, 1, 2, 3


def cmd_plan(args) -> int:
    try:
        plan = load_plan(args.config)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = write_manifest(plan)
    print(f"{len(plan.rows)} plan rows, {len(plan.jobs)} jobs -> {path}")
    for row in plan.rows:
        sizes = ", ".join(f"{L}x{M}" for L, M in row.sizes)
        print(f"  row {row.index:02d} [{row.name}] p={row.p:g} sizes={sizes} n_samples={row.n_samples} b={row.b} "
              f"T=[{row.t_min:g}, {row.t_max:g}] n_temps={row.n_temps}")
    return EXIT_OK


def _manifest_path(arg) -> Path:
    p = Path(arg)
    return p / "manifest.json" if p.is_dir() else p


def cmd_run(args) -> int:
    mpath = _manifest_path(args.manifest)
    try:
        _, plan = load_manifest(mpath)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    jobs = select_jobs(plan, args.job, args.row)
    if args.limit is not None:
        jobs = jobs[: args.limit]
    if not jobs:
        print("error: no jobs match the filter", file=sys.stderr)
        return EXIT_USAGE
    de_sign = -1.0 if args.inject_bug else 1.0
    outcomes = run_study(mpath, jobs, workers=args.workers, checkpoint_interval=args.checkpoint_interval,
                         halt_after=args.halt_after, de_sign=de_sign)
    counts = {}
    for o in outcomes:
        counts[o.status] = counts.get(o.status, 0) + 1
        if o.status == "failed" or args.verbose:
            print(f"{o.status:7s} {o.id}: {o.message}")
    print(", ".join(f"{v} {k}" for k, v in sorted(counts.items())))
    if counts.get("failed"):
        return EXIT_FAIL
    return EXIT_HALTED if counts.get("halted") else EXIT_OK


def cmd_analyze(args) -> int:
    inputs = list(args.inputs)
    out = args.out
    if args.group:
        mpath = _manifest_path(args.manifest or ".")
        root = mpath.parent
        inputs += sorted(str(p) for p in (root / "samples").glob(f"{args.group}_s*.moments.csv"))
        out = out or str(root / "analysis" / args.group)
    if not out:
        print("error: --out is required without --group", file=sys.stderr)
        return EXIT_USAGE
    try:
        doc = analyze_group(inputs, out, n_boot=args.n_boot, seed=args.seed)
    except (StudyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    t = doc["transition"]
    g = doc["group"]
    if t["detected"]:
        print(f"p={g['p']} L={g['L']} M={g['M']}: T_c* = {t['T_c']:.4f} +- {t['error']:.4f} ({t['message']})")
    else:
        print(f"p={g['p']} L={g['L']} M={g['M']}: {t['message']}")
    if doc["crossing_histogram"]:
        h = doc["crossing_histogram"]
        print(f"  f(w) at T_c*: double-peaked={h['double']} weight ratio={h['ratio']:.3f}")
    print(f"  -> {out}")
    return EXIT_OK


def cmd_phase(args) -> int:
    try:
        doc = phase_diagram(args.out, analyses=args.analyses, boundary_file=args.boundary,
                            n_resample=args.n_resample, seed=args.seed)
    except (StudyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if doc["found"]:
        print(f"p_c = {doc['p_c']:.4f} +- {doc['p_c_error']:.4f}")
    else:
        print(doc["message"])
    print(f"  -> {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in names:
        rep = run_suite(name, de_sign=-1.0 if args.inject_bug else 1.0)
        for line in rep.lines():
            print(line)
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tricolor", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="validate a study config and write its manifest")
    p.add_argument("config")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", parents=[common], help="execute jobs from a manifest")
    p.add_argument("manifest", help="manifest.json or the study output directory")
    p.add_argument("-w", "--workers", type=int, default=1)
    p.add_argument("--checkpoint-interval", type=int, default=None, help="sweeps between checkpoints")
    p.add_argument("--job", action="append", help="run jobs whose id contains this text (repeatable)")
    p.add_argument("--row", type=int, action="append", help="run jobs of this plan row (repeatable)")
    p.add_argument("--limit", type=int, default=None, help="run at most this many selected jobs")
    p.add_argument("--halt-after", type=int, default=None, help="checkpoint and stop at this sweep (testing)")
    p.add_argument("--inject-bug", action="store_true", help="flip the sign of energy changes (testing)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", parents=[common], help="skewness curve and transition estimate for one (p, L, M) group")
    p.add_argument("inputs", nargs="*", help="moment CSV files or directories")
    p.add_argument("--manifest", help="manifest (with --group)")
    p.add_argument("--group", help="group id, e.g. row00_p0.0000_L6_M6")
    p.add_argument("--out")
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("phase", parents=[common], help="phase boundary and threshold from analysis documents")
    p.add_argument("analyses", nargs="*", help="analysis.json files")
    p.add_argument("--boundary", help="TSV of (p, T_c, error) instead of analysis documents")
    p.add_argument("--out", required=True)
    p.add_argument("--n-resample", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("validate", parents=[common], help="run a self-check suite")
    p.add_argument("suite", choices=SUITES + ("all",))
    p.add_argument("--inject-bug", action="store_true", help="flip the sign of energy changes in MC")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if os.environ.get(OUTPUT_ENV):
        logging.getLogger(__name__).info("output directory overridden by %s", OUTPUT_ENV)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
