"""Plan, run and analyze a whole study in one go.

    python3 scripts/pipeline.py configs/clean_bracket.ini --workers 4
    python3 scripts/pipeline.py configs/disordered_bracket.ini --workers 16
    python3 scripts/pipeline.py configs/desk.ini --workers 8

An existing manifest in the output directory is reused (so an interrupted
study resumes from its checkpoints); pass ``--replan`` to overwrite it.
Every (p, L, M) group is analyzed once its samples are complete, and a
phase diagram is built when the config requests the Nishimori analysis.
"""

import argparse
import sys
from pathlib import Path

from tricolor.cli import EXIT_HALTED, EXIT_OK, main as tricolor
from tricolor.plan import load_plan


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("-w", "--workers", type=int, default=1)
    ap.add_argument("--replan", action="store_true", help="rewrite the manifest even if one exists")
    ap.add_argument("--n-boot", type=int, default=None, help="bootstrap resamples (default: from the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)

    plan = load_plan(args.config)
    root = Path(plan.output_dir)
    if args.replan or not (root / "manifest.json").exists():
        if (code := tricolor(["plan", args.config])) != EXIT_OK:
            return code
    code = tricolor(["run", str(root), "--workers", str(args.workers)] + (["-v"] if args.verbose else []))
    if code == EXIT_HALTED:
        return code
    n_boot = str(args.n_boot or plan.n_boot)
    analyses = []
    for group in sorted({j["group"] for j in plan.jobs}):
        n_jobs = sum(j["group"] == group for j in plan.jobs)
        n_done = len(list((root / "samples").glob(f"{group}_s*.moments.csv")))
        if n_done < n_jobs:
            print(f"skipping analysis of {group}: {n_done} of {n_jobs} samples present")
            continue
        if tricolor(["analyze", "--manifest", str(root), "--group", group, "--n-boot", n_boot]) == EXIT_OK:
            analyses.append(str(root / "analysis" / group / "analysis.json"))
    if plan.nishimori and len({r.p for r in plan.rows}) >= 2 and analyses:
        tricolor(["phase", *analyses, "--out", str(root / "phase")])
    return code


if __name__ == "__main__":
    sys.exit(main())
