"""On-disk formats: moment CSVs, histogram CSVs, checkpoints, JSON docs.

Every text output starts with ``#`` metadata lines (format version, code
version, config digest, seeds) so files are self-describing. Writes go to
a temporary sibling and are renamed into place.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__

MOMENTS_FORMAT = "tricolor-moments v1"
HIST_FORMAT = "tricolor-hist v1"
CHECKPOINT_FORMAT = "tricolor-checkpoint v1"

MOMENT_COLUMNS = ["sample_id", "temp_index", "temperature", "n_meas", "mean_w", "mean_w2", "mean_w3",
                  "mean_E", "mean_E2", "acc_frac", "swap_rate"]


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt(x) -> str:
    """Shortest round-trip float formatting; 'nan' for missing values."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _meta_lines(meta: dict) -> str:
    return "".join(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n" for k in sorted(meta))


def _read_meta(lines):
    meta = {}
    for line in lines:
        k, _, v = line[1:].strip().partition(": ")
        meta[k] = json.loads(v) if v else None
    return meta


# ------------------------------------------------------------------ moments


def moments_rows(sample_id: int, result) -> list[list]:
    rows = []
    n = len(result.temperatures)
    for j in range(n):
        m = result.moments[j]
        swap = result.swap_rate[j] if j < n - 1 else math.nan
        rows.append([sample_id, j, result.temperatures[j], m.n, m.mean_w, m.mean_w2, m.mean_w3,
                     m.mean_E, m.mean_E2, result.acc_frac[j], swap])
    return rows


def write_moments_csv(path, rows, meta: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# {MOMENTS_FORMAT}\n")
    buf.write(_meta_lines({"code_version": __version__, **meta}))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MOMENT_COLUMNS)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_moments_csv(path):
    """Returns (meta, rows) with rows as dicts of typed values."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != f"# {MOMENTS_FORMAT}":
        raise ValueError(f"{path}: not a {MOMENTS_FORMAT} file")
    comments = [ln for ln in text[1:] if ln.startswith("#")]
    body = [ln for ln in text[1:] if not ln.startswith("#")]
    reader = csv.DictReader(body)
    if reader.fieldnames != MOMENT_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    rows = []
    for r in reader:
        rows.append({k: (int(v) if k in ("sample_id", "temp_index", "n_meas") else float(v)) for k, v in r.items()})
    return _read_meta(comments), rows


# --------------------------------------------------------------- histograms


def write_hist_csv(path, hist: np.ndarray, n_loops: int, meta: dict) -> None:
    """Sparse exact histogram: loop-sum index k <-> w = -1 + 2k/n_loops."""
    buf = io.StringIO()
    buf.write(f"# {HIST_FORMAT}\n")
    buf.write(_meta_lines({"code_version": __version__, "n_loops": int(n_loops), **meta}))
    buf.write("temp_index,k,count\n")
    for j in range(hist.shape[0]):
        for k in np.flatnonzero(hist[j]):
            buf.write(f"{j},{int(k)},{int(hist[j, k])}\n")
    atomic_write_text(path, buf.getvalue())


def read_hist_csv(path, n_temps: int | None = None):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != f"# {HIST_FORMAT}":
        raise ValueError(f"{path}: not a {HIST_FORMAT} file")
    meta = _read_meta([ln for ln in lines[1:] if ln.startswith("#")])
    body = [ln for ln in lines[1:] if not ln.startswith("#")][1:]
    n_loops = int(meta["n_loops"])
    entries = [tuple(map(int, ln.split(","))) for ln in body]
    nt = n_temps if n_temps is not None else (max(e[0] for e in entries) + 1 if entries else 0)
    hist = np.zeros((nt, n_loops + 1), np.int64)
    for j, k, c in entries:
        hist[j, k] += c
    return meta, hist


# ------------------------------------------------------------------ json


def write_json(path, doc: dict) -> None:
    atomic_write_text(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_tsv(path, header: list[str], rows, comment: str = "") -> None:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write("# " + "\t".join(header) + "\n")
    for row in rows:
        buf.write("\t".join(fmt(v) for v in row) + "\n")
    atomic_write_text(path, buf.getvalue())


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, state: dict, meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    header = json.dumps({"format": CHECKPOINT_FORMAT, "code_version": __version__, **meta}, sort_keys=True)
    np.savez(tmp, __meta__=np.array(header), **state)
    os.replace(tmp, path)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        state = {k: data[k].copy() for k in data.files if k != "__meta__"}
    return meta, state
