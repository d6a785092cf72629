"""Study plans: config parsing, validation and job expansion.

Config grammar (INI-style, one ``key = value`` per line)::

    [study]
    master_seed = 2024          ; required, non-negative int
    output_dir = runs/desk      ; required
    nishimori = yes             ; optional: Nishimori analysis requested
    isotropic = yes             ; optional: enforce M = even member of {L, L-1}
    interval = 10               ; optional: sweeps between measurements
    checkpoint_interval = 0     ; optional: sweeps between checkpoints (0 = off)
    max_doublings = 1           ; optional: equilibration extensions per sample
    n_boot = 1000               ; optional: bootstrap resamples in analysis

    [row <name>]                ; one per line of the study table, file order kept
    p = 0.03, 0.035             ; one or more error rates (q = p)
    sizes = 6x6, 9x8            ; L x M pairs
    n_samples = 1600
    b = 17
    t_min = 0.70
    t_max = 1.40
    n_temps = 52
    n_meas = 131072             ; optional, default 2**b
    spacing = linear            ; optional: linear | geometric

A row with several ``p`` values expands to one plan row per value. Plan
rows are numbered in file order; job seeds derive from
``(master_seed, row_index, L, sample_index)``.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .lattice import LatticeError, LatticeSpec
from .mc import TemperatureLadder

MANIFEST_FORMAT = "tricolor-manifest v1"
OUTPUT_ENV = "TRICOLOR_OUTPUT_DIR"

STUDY_KEYS = {"master_seed", "output_dir", "nishimori", "isotropic", "interval", "checkpoint_interval",
              "max_doublings", "n_boot"}
ROW_KEYS = {"p", "sizes", "n_samples", "b", "t_min", "t_max", "n_temps", "n_meas", "spacing"}
ROW_REQUIRED = ROW_KEYS - {"n_meas", "spacing"}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class PlanRow:
    index: int
    name: str
    p: float
    sizes: tuple  # ((L, M), ...)
    n_samples: int
    b: int
    t_min: float
    t_max: float
    n_temps: int
    n_meas: int | None = None
    spacing: str = "linear"

    @property
    def q(self) -> float:
        return self.p

    @property
    def ladder(self) -> TemperatureLadder:
        return TemperatureLadder(self.t_min, self.t_max, self.n_temps, self.spacing)


@dataclass
class StudyPlan:
    rows: list
    master_seed: int
    output_dir: str
    nishimori: bool = False
    isotropic: bool = False
    interval: int = 10
    checkpoint_interval: int = 0
    max_doublings: int = 1
    n_boot: int = 1000
    config_digest: str = ""
    config_text: str = ""
    sections: list = field(default_factory=list)  # config row names, file order
    jobs: list = field(default_factory=list)


def _line_index(text: str) -> dict:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    where = {}
    section = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = n
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
        where[(section, key)] = n
    return where


def parse_plan(text: str, source: str = "<config>") -> StudyPlan:
    where = _line_index(text)

    def fail(section, key, msg):
        line = where.get((section, key)) or where.get((section, None)) or 0
        loc = f"[{section}]" + (f" {key}" if key else "")
        raise PlanError(f"{source}:{line}: {loc}: {msg}")

    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise PlanError(f"{source}: {exc}") from None

    if not cp.has_section("study"):
        raise PlanError(f"{source}:0: missing [study] section")
    st = cp["study"]
    for key in st:
        if key not in STUDY_KEYS:
            fail("study", key, f"unknown key (allowed: {', '.join(sorted(STUDY_KEYS))})")

    def get(sec, key, conv, default=None, required=False):
        s = cp[sec]
        if key not in s:
            if required:
                fail(sec, None, f"missing required key '{key}'")
            return default
        try:
            return conv(s[key])
        except (ValueError, TypeError) as exc:
            fail(sec, key, f"cannot parse {s[key]!r}: {exc}")

    def boolean(v):
        v = v.strip().lower()
        if v in ("yes", "true", "on", "1"):
            return True
        if v in ("no", "false", "off", "0"):
            return False
        raise ValueError("expected yes/no")

    def nonneg_int(v):
        i = int(v)
        if i < 0:
            raise ValueError("must be >= 0")
        return i

    plan = StudyPlan(
        rows=[],
        master_seed=get("study", "master_seed", nonneg_int, required=True),
        output_dir=get("study", "output_dir", str, required=True).strip(),
        nishimori=get("study", "nishimori", boolean, False),
        isotropic=get("study", "isotropic", boolean, False),
        interval=get("study", "interval", int, 10),
        checkpoint_interval=get("study", "checkpoint_interval", nonneg_int, 0),
        max_doublings=get("study", "max_doublings", nonneg_int, 1),
        n_boot=get("study", "n_boot", int, 1000),
        config_digest=hashlib.sha256(text.encode()).hexdigest(),
        config_text=text,
    )
    if plan.interval < 1:
        fail("study", "interval", "must be >= 1")

    def sizes(v):
        out = []
        for item in v.split(","):
            m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", item)
            if not m:
                raise ValueError(f"expected LxM, got {item.strip()!r}")
            out.append((int(m.group(1)), int(m.group(2))))
        return tuple(out)

    def floats(v):
        return [float(x) for x in v.split(",")]

    row_sections = [s for s in cp.sections() if s != "study"]
    if not row_sections:
        raise PlanError(f"{source}:0: no [row ...] sections")
    index = 0
    for sec in row_sections:
        if not sec.startswith("row"):
            fail(sec, None, "unknown section (expected [study] or [row <name>])")
        for key in cp[sec]:
            if key not in ROW_KEYS:
                fail(sec, key, f"unknown key (allowed: {', '.join(sorted(ROW_KEYS))})")
        for key in sorted(ROW_REQUIRED):
            if key not in cp[sec]:
                fail(sec, None, f"missing required key '{key}'")
        ps = get(sec, "p", floats)
        sz = get(sec, "sizes", sizes)
        for L, M in sz:
            try:
                LatticeSpec(L, M)
            except LatticeError as exc:
                fail(sec, "sizes", str(exc))
            if plan.isotropic and M != (L if L % 2 == 0 else L - 1):
                fail(sec, "sizes", f"pairing rule: M must be the even member of {{L, L-1}} (got {L}x{M})")
        if len({L for L, _ in sz}) != len(sz):
            fail(sec, "sizes", "each L may appear once per row")
        n_samples = get(sec, "n_samples", int)
        if n_samples < 1:
            fail(sec, "n_samples", "must be >= 1")
        b = get(sec, "b", int)
        if b < 1:
            fail(sec, "b", "must be >= 1")
        t_min, t_max = get(sec, "t_min", float), get(sec, "t_max", float)
        n_temps = get(sec, "n_temps", int)
        spacing = get(sec, "spacing", lambda v: v.strip(), "linear")
        try:
            TemperatureLadder(t_min, t_max, n_temps, spacing)
        except ValueError as exc:
            fail(sec, "t_min", str(exc))
        plan.sections.append(sec)
        n_meas = get(sec, "n_meas", int)
        if n_meas is not None and n_meas < 1:
            fail(sec, "n_meas", "must be >= 1")
        for p in ps:
            if not 0.0 <= p <= 1.0:
                fail(sec, "p", f"error rate must lie in [0, 1], got {p}")
            if plan.nishimori and not 0.0 <= p < 0.5:
                fail(sec, "p", f"Nishimori analysis requested but p={p} is outside [0, 1/2)")
            plan.rows.append(PlanRow(index, sec[3:].strip() or str(index), p, sz, n_samples, b,
                                     t_min, t_max, n_temps, n_meas, spacing))
            index += 1
    plan.jobs = expand_jobs(plan)
    return plan


def load_plan(path) -> StudyPlan:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PlanError(f"{path}: {exc}") from None
    plan = parse_plan(text, str(path))
    if os.environ.get(OUTPUT_ENV):
        plan.output_dir = os.environ[OUTPUT_ENV]
    return plan


def group_id(row: PlanRow, L: int, M: int) -> str:
    return f"row{row.index:02d}_p{row.p:.4f}_L{L}_M{M}"


def job_id(row: PlanRow, L: int, M: int, sample: int) -> str:
    return f"{group_id(row, L, M)}_s{sample:05d}"


def expand_jobs(plan: StudyPlan) -> list[dict]:
    jobs = []
    for row in plan.rows:
        for L, M in row.sizes:
            for s in range(row.n_samples):
                jobs.append({
                    "id": job_id(row, L, M, s),
                    "group": group_id(row, L, M),
                    "row": row.index, "p": row.p, "q": row.q, "L": L, "M": M, "sample": s,
                    "seed_key": [row.index, L, s],
                })
    return jobs


def manifest_doc(plan: StudyPlan) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "code_version": __version__,
        "config_digest": plan.config_digest,
        "config_text": plan.config_text,
        "master_seed": plan.master_seed,
        "output_dir": plan.output_dir,
        "study": {k: getattr(plan, k) for k in ("nishimori", "isotropic", "interval", "checkpoint_interval",
                                                 "max_doublings", "n_boot")},
        "sections": plan.sections,
        "rows": [dict(asdict(r), sizes=[list(s) for s in r.sizes]) for r in plan.rows],
        "jobs": plan.jobs,
    }


def plan_from_manifest(doc: dict) -> StudyPlan:
    if doc.get("format") != MANIFEST_FORMAT:
        raise PlanError("not a tricolor manifest")
    rows = [PlanRow(**dict(r, sizes=tuple(tuple(s) for s in r["sizes"]))) for r in doc["rows"]]
    plan = StudyPlan(rows=rows, master_seed=doc["master_seed"], output_dir=doc["output_dir"],
                     config_digest=doc["config_digest"], config_text=doc["config_text"], sections=doc.get("sections", []),
                     jobs=doc["jobs"],
                     **doc["study"])
    return plan
