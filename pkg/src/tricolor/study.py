"""Study pipeline: run jobs from a manifest, analyze groups, assemble the phase diagram.

Output layout under the study's output directory::

    manifest.json
    samples/<job>.moments.csv     per-temperature thermal moments
    samples/<job>.hist.csv        exact loop-sum histogram per temperature
    samples/<job>.logbins.csv     logarithmic-binning sums (equilibration data)
    samples/<job>.eq.json         equilibration verdict of the sample
    checkpoints/<job>.ckpt.npz    present only while a job is unfinished
    equilibration.json            study-wide summary, rewritten by every run
    analysis/<group>/             written by ``analyze``

Nothing in these files depends on wall-clock time or worker scheduling.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (PhaseBoundary, TransitionEstimate, extrapolate_tc, find_zero_crossing, intersect_nishimori,
                       maxwell_crosscheck, nishimori_line, peak_split, skewness_curve, specific_heat_curve,
                       specific_heat_peak)
from .files import (atomic_write_text, fmt, load_checkpoint, moments_rows, read_hist_csv, read_json, read_moments_csv,
                    save_checkpoint, sha256_file, write_hist_csv, write_json, write_moments_csv, write_tsv)
from .lattice import LatticeSpec, build_lattice
from .mc import EquilibrationError, LogBinnedSeries, RunConfig, SampleRun, check_equilibration, derive_seed
from .model import CouplingSet, NoiseParameters, lattice_interactions, sample_disorder
from .observables import ThermalMoments, WilsonHistogram
from .plan import PlanError, StudyPlan, manifest_doc, plan_from_manifest

log = logging.getLogger(__name__)

ANALYSIS_FORMAT = "tricolor-analysis v1"
PHASE_FORMAT = "tricolor-phase v1"
LOGBINS_FORMAT = "tricolor-logbins v1"


class StudyError(RuntimeError):
    pass


# ---------------------------------------------------------------- manifest


def manifest_digest(doc: dict) -> str:
    """Digest of everything that determines results (the output path does not)."""
    core = {k: v for k, v in doc.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def write_manifest(plan: StudyPlan) -> Path:
    out = Path(plan.output_dir)
    path = out / "manifest.json"
    write_json(path, manifest_doc(plan))
    return path


def load_manifest(path) -> tuple[dict, StudyPlan]:
    try:
        doc = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanError(f"{path}: cannot read manifest: {exc}") from None
    plan = plan_from_manifest(doc)
    return doc, plan


def select_jobs(plan: StudyPlan, patterns=None, rows=None) -> list[dict]:
    """Jobs whose id contains any of ``patterns`` and whose row is in ``rows``."""
    jobs = plan.jobs
    if rows:
        jobs = [j for j in jobs if j["row"] in set(rows)]
    if patterns:
        jobs = [j for j in jobs if any(p in j["id"] for p in patterns)]
    return jobs


def job_paths(out_dir, job_id: str) -> dict:
    out = Path(out_dir)
    s = out / "samples"
    return {
        "moments": s / f"{job_id}.moments.csv",
        "hist": s / f"{job_id}.hist.csv",
        "logbins": s / f"{job_id}.logbins.csv",
        "eq": s / f"{job_id}.eq.json",
        "checkpoint": out / "checkpoints" / f"{job_id}.ckpt.npz",
    }


# -------------------------------------------------------------------- jobs


@dataclass
class JobOutcome:
    id: str
    status: str  # done | skipped | halted | failed
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("done", "skipped", "halted")


def _job_setup(plan: StudyPlan, job: dict, interval: int, checkpoint_interval: int | None):
    row = plan.rows[job["row"]]
    g = build_lattice(LatticeSpec(job["L"], job["M"]))
    key = tuple(job["seed_key"])
    gamma = sample_disorder(g, NoiseParameters(job["p"], job["q"]), derive_seed(plan.master_seed, *key, 0))
    inter = lattice_interactions(g, gamma, CouplingSet())
    run = RunConfig(b=row.b, n_meas=row.n_meas, interval=interval, master_seed=plan.master_seed,
                    checkpoint_interval=checkpoint_interval or None, max_doublings=plan.max_doublings)
    return row, g, inter, run, derive_seed(plan.master_seed, *key, 1)


def _job_meta(plan: StudyPlan, digest: str, job: dict, n_sites: int) -> dict:
    return {
        "job": job["id"], "group": job["group"], "p": job["p"], "q": job["q"], "L": job["L"], "M": job["M"],
        "n_sites": n_sites, "J": 1.0, "K": 1.0, "sample": job["sample"], "seed_key": job["seed_key"],
        "master_seed": plan.master_seed, "config_digest": plan.config_digest, "manifest_digest": digest,
    }


def execute_job(manifest_path, job_id: str, *, checkpoint_interval: int | None = None,
                halt_after: int | None = None, de_sign: float = 1.0) -> JobOutcome:
    """Run (or resume) one job; safe to call in a worker process."""
    try:
        return _execute_job(manifest_path, job_id, checkpoint_interval, halt_after, de_sign)
    except Exception as exc:  # report, never crash the pool
        log.exception("job %s failed", job_id)
        return JobOutcome(job_id, "failed", f"{type(exc).__name__}: {exc}")


def _execute_job(manifest_path, job_id, checkpoint_interval, halt_after, de_sign):
    doc, plan = load_manifest(manifest_path)
    out = Path(manifest_path).parent
    digest = manifest_digest(doc)
    job = next((j for j in plan.jobs if j["id"] == job_id), None)
    if job is None:
        return JobOutcome(job_id, "failed", "job not in manifest")
    paths = job_paths(out, job_id)
    if paths["moments"].exists():
        meta, _ = read_moments_csv(paths["moments"])
        if meta.get("manifest_digest") != digest:
            return JobOutcome(job_id, "failed", f"{paths['moments'].name} was produced by a different manifest")
        return JobOutcome(job_id, "skipped", "outputs present")

    ci = checkpoint_interval if checkpoint_interval is not None else plan.checkpoint_interval
    row, g, inter, run, mc_seed = _job_setup(plan, job, plan.interval, ci)
    sim = SampleRun(inter, row.ladder, run, mc_seed, de_sign=de_sign)
    ck_meta = {"job": job_id, "manifest_digest": digest}
    if paths["checkpoint"].exists():
        meta, state = load_checkpoint(paths["checkpoint"])
        if meta.get("job") != job_id or meta.get("manifest_digest") != digest:
            return JobOutcome(job_id, "failed",
                              f"checkpoint {paths['checkpoint'].name} does not match the manifest; refusing to resume")
        sim.restore(state)
        log.info("%s: resumed at sweep %d", job_id, sim.sweeps)

    def checkpoint(s):
        save_checkpoint(paths["checkpoint"], s.state(), ck_meta)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        done = sim.run_to_completion(checkpoint=checkpoint if ci else None, halt_after=halt_after)
    if not done:
        checkpoint(sim)
        return JobOutcome(job_id, "halted", f"halted at sweep {sim.sweeps}")

    res = sim.result()
    meta = _job_meta(plan, digest, job, g.n_sites)
    eq = res.equilibration
    meta.update(b_final=res.b_final, sweeps=res.sweeps, interval=plan.interval,
                equilibrated=None if eq is None else bool(eq.passed))
    write_hist_csv(paths["hist"], res.hist, res.n_loops, meta)
    write_logbins_csv(paths["logbins"], res.logbins, meta)
    write_json(paths["eq"], {
        "meta": meta,
        "lowest_temperature": float(res.temperatures[0]),
        "verdict": "unchecked" if eq is None else ("passed" if eq.passed else "failed"),
        "message": "too few logarithmic bins" if eq is None else eq.message,
        "bins": [] if eq is None else eq.bins,
        "means": {} if eq is None else eq.means,
        "errors": {} if eq is None else eq.errors,
    })
    # the moments file marks completion, so it is written last
    write_moments_csv(paths["moments"], moments_rows(job["sample"], res), meta)
    paths["checkpoint"].unlink(missing_ok=True)
    return JobOutcome(job_id, "done", f"b={res.b_final} equilibration={meta['equilibrated']}")


def write_logbins_csv(path, logbins: list[LogBinnedSeries], meta: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# {LOGBINS_FORMAT}\n")
    for k in sorted(meta):
        buf.write(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n")
    buf.write("temp_index,bin,sub,count,sum_w,sum_E\n")
    for j, lb in enumerate(logbins):
        for b, s in zip(*np.nonzero(lb.count)):
            buf.write(f"{j},{b},{s},{int(lb.count[b, s])},{fmt(lb.sum_w[b, s])},{fmt(lb.sum_E[b, s])}\n")
    atomic_write_text(path, buf.getvalue())


def read_logbins_csv(path, n_temps: int) -> list[LogBinnedSeries]:
    out = [LogBinnedSeries.empty() for _ in range(n_temps)]
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or line.startswith("temp_index"):
            continue
        j, b, s, c, sw, se = line.split(",")
        if int(j) >= n_temps:
            continue
        lb = out[int(j)]
        lb.count[int(b), int(s)] = int(c)
        lb.sum_w[int(b), int(s)] = float(sw)
        lb.sum_E[int(b), int(s)] = float(se)
    return out


def run_study(manifest_path, jobs: list[dict], *, workers: int = 1, checkpoint_interval: int | None = None,
              halt_after: int | None = None, de_sign: float = 1.0) -> list[JobOutcome]:
    kwargs = dict(checkpoint_interval=checkpoint_interval, halt_after=halt_after, de_sign=de_sign)
    ids = [j["id"] for j in jobs]
    if workers <= 1 or len(ids) <= 1:
        outcomes = [execute_job(manifest_path, i, **kwargs) for i in ids]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(execute_job, manifest_path, i, **kwargs) for i in ids]
            outcomes = [f.result() for f in futures]
    write_equilibration_summary(manifest_path)
    return outcomes


def write_equilibration_summary(manifest_path) -> dict:
    """Per-group summary: sample verdicts plus a disorder-averaged log-binning check."""
    doc, plan = load_manifest(manifest_path)
    out = Path(manifest_path).parent
    groups = {}
    for job in plan.jobs:
        groups.setdefault(job["group"], []).append(job)
    summary = {"format": "tricolor-equilibration v1", "code_version": __version__,
               "config_digest": plan.config_digest, "master_seed": plan.master_seed, "groups": {}}
    for gid, jobs in groups.items():
        verdicts, series = {}, []
        for job in jobs:
            p = job_paths(out, job["id"])
            if not p["eq"].exists():
                continue
            eq = read_json(p["eq"])
            verdicts[job["id"]] = eq["verdict"]
            if p["logbins"].exists():
                series.append(read_logbins_csv(p["logbins"], 1)[0])
        entry = {"complete": len(verdicts) == len(jobs), "n_jobs": len(jobs), "n_done": len(verdicts),
                 "n_failed": sum(v == "failed" for v in verdicts.values()), "samples": verdicts}
        if len(series) >= 2:
            try:
                st = check_equilibration(series)
                entry["disorder_averaged"] = {"passed": st.passed, "message": st.message}
            except EquilibrationError as exc:
                entry["disorder_averaged"] = {"passed": None, "message": str(exc)}
        summary["groups"][gid] = entry
    write_json(out / "equilibration.json", summary)
    return summary


# ----------------------------------------------------------------- analyze


@dataclass
class SampleTable:
    path: Path
    meta: dict
    sample_id: int
    temperatures: np.ndarray
    rows: list


def _moment_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.moments.csv")))
        else:
            files.append(p)
    if not files:
        raise StudyError("no moment files given")
    return files


def load_samples(paths) -> list[SampleTable]:
    tables = []
    for f in _moment_files(paths):
        meta, rows = read_moments_csv(f)
        for sid in sorted({r["sample_id"] for r in rows}):
            rs = sorted((r for r in rows if r["sample_id"] == sid and r["n_meas"] > 0),
                        key=lambda r: r["temperature"])
            tables.append(SampleTable(f, meta, sid, np.array([r["temperature"] for r in rs]), rs))
    return tables


def _check_group(tables: list[SampleTable]) -> dict:
    keys = ("p", "q", "L", "M", "n_sites", "J", "K")
    ref = {k: tables[0].meta.get(k) for k in keys}
    for t in tables[1:]:
        for k in keys:
            if t.meta.get(k) != ref[k]:
                raise StudyError(f"{t.path.name}: {k}={t.meta.get(k)!r} differs from "
                                 f"{tables[0].path.name} ({ref[k]!r})")
    seen = {}
    for t in tables:
        key = (t.meta.get("master_seed"), tuple(t.meta.get("seed_key") or ()), t.sample_id)
        if key in seen:
            raise StudyError(f"{t.path.name}: sample {t.sample_id} duplicates {seen[key].name}")
        seen[key] = t.path
    temps = sorted({float(x) for t in tables for x in t.temperatures})
    bad = [f"{t.path.name} (sample {t.sample_id}: missing {len(temps) - len(t.temperatures)} of {len(temps)})"
           for t in tables if len(t.temperatures) != len(temps) or list(t.temperatures) != temps]
    if bad:
        raise StudyError("temperatures missing across samples: " + ", ".join(bad))
    ref["temperatures"] = temps
    return ref


def aligned_edges(n_loops: int, occupied: np.ndarray, target_bins: int = 40) -> np.ndarray:
    """Histogram edges aligned to the discrete support of w.

    w only takes values ``-1 + 2k/n_loops`` and typically only every ``step``
    of them (parity constraints), so each bin holds the same number of
    reachable values and no bin straddles a support point.
    """
    occ = np.flatnonzero(occupied)
    step = int(np.gcd.reduce(np.diff(occ))) if len(occ) > 1 else 1
    step = max(step, 1)
    k0 = occ[0] % step if len(occ) else 0
    n_support = (n_loops - k0) // step + 1
    per_bin = max(1, math.ceil(n_support / target_bins))
    width = 2.0 * step * per_bin / n_loops
    start = -1.0 + 2.0 * (k0 - step / 2) / n_loops
    n_bins = math.ceil(n_support / per_bin)
    return start + width * np.arange(n_bins + 1)


def averaged_histograms(hists: list[np.ndarray], n_loops: int, target_bins: int = 40):
    """Disorder-averaged f(w) per temperature on lattice-aligned bins."""
    total = np.sum([h for h in hists], axis=0)
    edges = aligned_edges(n_loops, total.sum(axis=0) > 0, target_bins)
    w = -1.0 + 2.0 * np.arange(n_loops + 1) / n_loops
    out = []
    for j in range(total.shape[0]):
        masses = []
        for h in hists:
            c, _ = np.histogram(w, bins=edges, weights=h[j])
            if c.sum() > 0:
                masses.append(c / c.sum())
        mass = np.mean(masses, axis=0)
        out.append(WilsonHistogram(edges, mass, mass))
    return out


def analyze_group(paths, out_dir, *, n_boot: int = 1000, seed: int = 0, target_bins: int = 40) -> dict:
    """ζ(T) curve, transition estimate and cross-checks for one (p, L, M) group."""
    tables = load_samples(paths)
    if len(tables) < 2:
        raise StudyError(f"analysis needs >= 2 disorder samples, got {len(tables)}")
    info = _check_group(tables)
    T = np.array(info["temperatures"])
    L, M = info["L"], info["M"]
    N = 3 * L * L * M
    moments = []
    for j in range(len(T)):
        cols = {k: np.array([t.rows[j][k] for t in tables]) for k in
                ("mean_w", "mean_w2", "mean_w3", "mean_E", "mean_E2", "n_meas")}
        moments.append(ThermalMoments(cols["mean_w"], cols["mean_w2"], cols["mean_w3"], cols["mean_E"],
                                      cols["mean_E2"], cols["n_meas"]))
    group_meta = {"p": info["p"], "q": info["q"], "L": L, "M": M, "N": N}
    curve = skewness_curve(T, moments, n_boot=n_boot, seed=seed, convention="ordered", meta=dict(group_meta))
    cv = specific_heat_curve(moments, T, info["n_sites"])
    cv_peak = specific_heat_peak(T, cv)
    est = find_zero_crossing(curve, near=cv_peak.T_c if cv_peak.reliable else None, seed=seed)

    # histograms, when every sample has one
    hist_files = [t.path.with_name(t.path.name.replace(".moments.csv", ".hist.csv")) for t in tables]
    maxwell, at_crossing, hists_out = None, None, None
    if all(h.exists() for h in hist_files):
        per_file = {}
        for h in hist_files:
            if h not in per_file:
                meta, counts = read_hist_csv(h, len(T))
                per_file[h] = (meta, counts)
        n_loops = int(next(iter(per_file.values()))[0]["n_loops"])
        fw = averaged_histograms([c for _, c in per_file.values()], n_loops, target_bins)
        hists_out = fw
        mc = maxwell_crosscheck(list(zip(T, fw)))
        maxwell = {"T_c": mc.T_c, "conclusive": mc.conclusive, "message": mc.message,
                   "ratios": [[s.T, s.ratio] for s in mc.details]}
        if est.detected:
            i = int(np.searchsorted(T, est.T_c))
            i = min(max(i, 1), len(T) - 1)
            a = (est.T_c - T[i - 1]) / (T[i] - T[i - 1])
            mass = (1 - a) * fw[i - 1].mass + a * fw[i].mass
            ps = peak_split(WilsonHistogram(fw[i].edges, mass, mass), est.T_c)
            at_crossing = {"T": est.T_c, "double": ps.double, "ratio": ps.ratio, "split": ps.split,
                           "interpolated_between": [float(T[i - 1]), float(T[i])]}

    doc = {
        "format": ANALYSIS_FORMAT,
        "code_version": __version__,
        "group": group_meta,
        "convention": "ordered",
        "n_samples": len(tables),
        "n_boot": n_boot,
        "seed": seed,
        "curve": {"temperatures": curve.temperatures, "zeta": curve.zeta, "errors": curve.errors},
        "transition": _estimate_doc(est),
        "specific_heat": {"c": cv, "peak": asdict(cv_peak)},
        "maxwell": maxwell,
        "crossing_histogram": at_crossing,
        "provenance": _provenance(tables, hist_files),
    }
    out = Path(out_dir)
    write_json(out / "analysis.json", doc)
    header = f"{ANALYSIS_FORMAT}; code {__version__}; p={info['p']} L={L} M={M} N={N}; samples={len(tables)}"
    write_tsv(out / "zeta.tsv", ["T", "zeta", "error"], zip(T, curve.zeta, curve.errors), header)
    write_tsv(out / "cv.tsv", ["T", "c"], zip(T, cv), header)
    if hists_out is not None:
        rows = [(t, c, m) for t, h in zip(T, hists_out) for c, m in zip(h.centers, h.mass)]
        write_tsv(out / "fw.tsv", ["T", "w", "f"], rows, header)
    return doc


def _estimate_doc(est: TransitionEstimate) -> dict:
    d = asdict(est)
    d["bracket"] = list(est.bracket) if est.bracket else None
    return d


def _provenance(tables, hist_files) -> dict:
    files = sorted({t.path for t in tables} | {h for h in hist_files if h.exists()})
    return {
        "inputs": [{"file": f.name, "sha256": sha256_file(f)} for f in files],
        "config_digests": sorted({t.meta.get("config_digest") for t in tables if t.meta.get("config_digest")}),
        "master_seeds": sorted({t.meta.get("master_seed") for t in tables if t.meta.get("master_seed") is not None}),
    }


# ------------------------------------------------------------------- phase


def read_boundary_tsv(path) -> list[tuple]:
    pts = []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        vals = [float(x) for x in s.split()]
        pts.append((vals[0], vals[1], vals[2] if len(vals) > 2 else 0.0))
    return pts


def boundary_from_analyses(paths) -> tuple[list, list]:
    """Per-p thermodynamic-limit T_c from analysis documents."""
    docs = []
    for p in map(Path, paths):
        d = read_json(p)
        if d.get("format") != ANALYSIS_FORMAT:
            raise StudyError(f"{p}: not an analysis document")
        docs.append((p, d))
    conv = {d["convention"] for _, d in docs}
    if len(conv) > 1:
        raise StudyError(f"inconsistent skewness conventions across documents: {sorted(conv)}")
    seen = {}
    for path, d in docs:
        g = d["group"]
        if g["N"] != 3 * g["L"] ** 2 * g["M"]:
            raise StudyError(f"{path}: N={g['N']} inconsistent with L={g['L']}, M={g['M']}")
        key = (g["p"], g["L"])
        if key in seen:
            other, M0 = seen[key]
            what = "duplicate" if M0 == g["M"] else f"inconsistent M ({M0} vs {g['M']})"
            raise StudyError(f"{path}: {what} for p={g['p']}, L={g['L']} (also in {other})")
        seen[key] = (path, g["M"])
    by_p = {}
    for path, d in docs:
        by_p.setdefault(d["group"]["p"], []).append((path, d))
    points, per_p = [], []
    for p in sorted(by_p):
        ests = []
        for path, d in sorted(by_p[p], key=lambda x: x[1]["group"]["N"]):
            t = d["transition"]
            ests.append(TransitionEstimate(t["T_c"] if t["T_c"] is not None else math.nan,
                                           t["error"] if t["error"] is not None else math.nan,
                                           d["group"]["N"], bool(t["detected"]), t["message"]))
        detected = [e for e in ests if e.detected]
        entry = {"p": p, "sizes": [{"N": e.N, "T_c": e.T_c, "error": e.error, "detected": e.detected}
                                   for e in ests]}
        if len(detected) >= 2:
            ex = extrapolate_tc(detected)
            entry.update(method="1/N extrapolation", T_c=ex.T_c, error=ex.error, slope=ex.slope, chi2=ex.chi2)
        elif len(detected) == 1:
            entry.update(method="single size (no extrapolation)", T_c=detected[0].T_c, error=detected[0].error)
        else:
            entry.update(method="no transition detected", T_c=None, error=None)
        per_p.append(entry)
        if entry["T_c"] is not None:
            points.append((p, entry["T_c"], entry["error"]))
    return points, per_p


def phase_diagram(out_dir, *, analyses=(), boundary_file=None, n_resample: int = 2000, seed: int = 0) -> dict:
    if boundary_file is not None:
        points, per_p = read_boundary_tsv(boundary_file), []
        inputs = [Path(boundary_file)]
    else:
        points, per_p = boundary_from_analyses(analyses)
        inputs = [Path(a) for a in analyses]
    if len({p for p, _, _ in points}) < 2:
        raise StudyError("phase diagram needs transition estimates at >= 2 values of p")
    points = sorted(points)
    pb = intersect_nishimori(PhaseBoundary(points), n_resample=n_resample, seed=seed)
    grid = np.round(np.arange(0, 3001) * 5e-5, 10)  # p in [0, 0.15]
    doc = {
        "format": PHASE_FORMAT,
        "code_version": __version__,
        "boundary": [list(pt) for pt in points],
        "per_p": per_p,
        "found": pb.found,
        "p_c": pb.p_c,
        "p_c_error": pb.p_c_error,
        "message": pb.message,
        "nishimori": "T_N(p) = 2J / ln((1 - p) / p), J = 1",
        "provenance": {"inputs": [{"file": f.name, "sha256": sha256_file(f)} for f in sorted(inputs)],
                       "n_resample": n_resample, "seed": seed},
    }
    out = Path(out_dir)
    write_json(out / "phase.json", doc)
    write_tsv(out / "boundary.tsv", ["p", "T_c", "error"], points, f"{PHASE_FORMAT}; code {__version__}")
    write_tsv(out / "nishimori.tsv", ["p", "T_N"], zip(grid, nishimori_line(grid)),
              f"{PHASE_FORMAT}; analytic Nishimori line, J = 1")
    return doc
