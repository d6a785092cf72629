"""Regenerate the golden files used by the tests.

    python3 scripts/make_golden.py

Writes the exact-enumeration table for the 27-spin oracle geometry and the
small-run fixture (moment files plus analysis document) from
tests/golden/smallrun.ini.
"""

import argparse
import shutil
import tempfile
from pathlib import Path

from tricolor import __version__
from tricolor.lattice import LatticeSpec, build_lattice
from tricolor.model import CouplingSet, NoiseParameters, lattice_interactions, sample_disorder
from tricolor.oracle import count_states, write_golden
from tricolor.plan import parse_plan
from tricolor.study import analyze_group, run_study, write_manifest
from tricolor.validation import ORACLE_SEED, ORACLE_TEMPERATURES

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"
SMALL_RUN_BOOT = 200


def oracle_golden(out: Path):
    g = build_lattice(LatticeSpec(3, 1, degenerate_ok=True))
    noise = NoiseParameters(0.1, 0.1)
    c = CouplingSet()
    inter = lattice_interactions(g, sample_disorder(g, noise, ORACLE_SEED), c)
    counts = count_states(inter)
    header = {
        "geometry": "L=3 M=1 degenerate", "p": noise.p, "q": noise.q, "disorder_seed": ORACLE_SEED,
        "J": c.J, "K": c.K, "n_sites": inter.n_sites, "digest": counts.digest, "code_version": __version__,
        "temperatures": ",".join(repr(t) for t in ORACLE_TEMPERATURES),
    }
    write_golden(out, header, [counts.exact(1.0 / T) for T in ORACLE_TEMPERATURES])
    print(f"wrote {out}")


def small_run_golden(config: Path, out: Path):
    plan = parse_plan(config.read_text())
    with tempfile.TemporaryDirectory() as tmp:
        plan.output_dir = tmp
        outcomes = run_study(write_manifest(plan), plan.jobs)
        bad = [o for o in outcomes if o.status != "done"]
        if bad:
            raise SystemExit(f"small run failed: {bad}")
        if out.exists():
            shutil.rmtree(out)
        out.mkdir(parents=True)
        for f in sorted((Path(tmp) / "samples").glob("*.moments.csv")):
            shutil.copy(f, out / f.name)
        analyze_group([Path(tmp) / "samples"], out, n_boot=SMALL_RUN_BOOT)
    for extra in ("zeta.tsv", "cv.tsv", "fw.tsv"):
        (out / extra).unlink(missing_ok=True)
    print(f"wrote {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--golden-dir", type=Path, default=GOLDEN)
    args = ap.parse_args()
    oracle_golden(args.golden_dir / "oracle_L3M1_p0.1.txt")
    small_run_golden(args.golden_dir / "smallrun.ini", args.golden_dir / "smallrun")


if __name__ == "__main__":
    main()
