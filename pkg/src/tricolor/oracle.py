"""Exact enumeration for tiny systems (N_sites <= 28).

A Gray-code walk visits all 2^N states flipping one spin per step and
counts states by the triple (five-body sum, hexagon sum, raw loop sum).
The counts are exact integers, so any temperature can then be evaluated
without revisiting the state space.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .model import Interactions

MAX_SITES = 28
GOLDEN_FORMAT = "tricolor-golden v1"


class EnumerationRefused(ValueError):
    pass


def interactions_digest(inter: Interactions) -> str:
    h = hashlib.sha256()
    for a in (inter.term_sites, inter.term_sign, inter.term_weight, inter.term_class, inter.loops):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def _odd_lists(rows, n_sites):
    lists = [[] for _ in range(n_sites)]
    for k, row in enumerate(rows):
        sites, mult = np.unique(row[row >= 0], return_counts=True)
        for s in sites[mult % 2 == 1]:
            lists[int(s)].append(k)
    ptr = np.zeros(n_sites + 1, np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    flat = np.array([k for x in lists for k in x], dtype=np.int64)
    return ptr, flat


@nb.njit(cache=True)
def _gray_walk(n, tv, term_class, flip_ptr, flip_terms, lv, loop_ptr, loop_idx,
               s0, s1, w, off0, off1, offw, counts, check_steps, check_out):
    counts[s0 + off0, s1 + off1, w + offw] += 1
    nxt = 0
    n_checks = check_steps.shape[0]
    total = np.int64(1) << n
    for k in range(1, total):
        # lowest set bit of k selects the spin to flip
        b = 0
        while ((k >> b) & 1) == 0:
            b += 1
        for q in range(flip_ptr[b], flip_ptr[b + 1]):
            t = flip_terms[q]
            tv[t] = -tv[t]
            if term_class[t] == 0:
                s0 += 2 * tv[t]
            else:
                s1 += 2 * tv[t]
        for q in range(loop_ptr[b], loop_ptr[b + 1]):
            j = loop_idx[q]
            lv[j] = -lv[j]
            w += 2 * lv[j]
        counts[s0 + off0, s1 + off1, w + offw] += 1
        while nxt < n_checks and check_steps[nxt] == k:
            check_out[nxt, 0] = s0
            check_out[nxt, 1] = s1
            check_out[nxt, 2] = w
            nxt += 1


@dataclass
class ExactResult:
    beta: float
    lnZ: float
    E: float
    E2: float
    w: float
    w2: float
    w3: float
    f_w: np.ndarray  # probability of each loop-sum value, index k <-> w = -1 + 2k/n_loops
    n_sites: int
    provenance: dict = field(default_factory=dict)

    @property
    def specific_heat(self) -> float:
        return self.beta**2 * (self.E2 - self.E**2) / self.n_sites


@dataclass
class StateCounts:
    """Exact number of states for each (S_five, S_hex, loop sum) triple."""

    counts: np.ndarray
    n_class: tuple  # number of terms per class
    n_loops: int
    weights: tuple  # coupling per class
    n_sites: int
    digest: str
    checks: np.ndarray | None = None  # (step, s0, s1, w) rows

    def exact(self, beta: float) -> ExactResult:
        n0, n1 = self.n_class
        s0 = np.arange(-n0, n0 + 1)[:, None, None]
        s1 = np.arange(-n1, n1 + 1)[None, :, None]
        wv = (np.arange(-self.n_loops, self.n_loops + 1) / max(self.n_loops, 1))[None, None, :]
        E = -self.weights[0] * s0 - self.weights[1] * s1
        E = np.broadcast_to(E, self.counts.shape)
        occupied = self.counts > 0
        e0 = E[occupied].min()
        boltz = np.where(occupied, self.counts * np.exp(-beta * (E - e0)), 0.0)
        Z = math.fsum(boltz.ravel())
        Wb = np.broadcast_to(wv, self.counts.shape)

        def avg(x):
            return math.fsum((boltz * x).ravel()) / Z

        f_full = boltz.sum(axis=(0, 1)) / Z
        # loop sum W has the parity of n_loops, so W + n_loops = 2k
        f_w = f_full[0::2]
        return ExactResult(
            beta=beta, lnZ=math.log(Z) - beta * e0,
            E=avg(E), E2=avg(E * E), w=avg(Wb), w2=avg(Wb**2), w3=avg(Wb**3),
            f_w=f_w, n_sites=self.n_sites,
            provenance={"digest": self.digest, "beta": beta, "n_sites": self.n_sites},
        )


def count_states(inter: Interactions, n_checks: int = 0, seed=0) -> StateCounts:
    """Gray-code enumeration of all 2^N states of ``inter``.

    Terms must carry one coupling per class (class 0 = J, class 1 = K).
    ``n_checks`` random steps record the incrementally tracked sums for
    verification against from-scratch evaluation.
    """
    n = inter.n_sites
    if n > MAX_SITES:
        raise EnumerationRefused(f"exact enumeration is capped at {MAX_SITES} sites, system has {n}")
    weights = []
    n_class = []
    for c in (0, 1):
        mask = inter.term_class == c
        wc = np.unique(inter.term_weight[mask])
        if len(wc) > 1:
            raise ValueError(f"class {c} terms carry several couplings {wc}")
        weights.append(float(wc[0]) if len(wc) else 0.0)
        n_class.append(int(mask.sum()))
    # all spins +1 at step 0
    tv = inter.term_sign.astype(np.int64).copy()
    s0 = int(tv[inter.term_class == 0].sum())
    s1 = int(tv[inter.term_class == 1].sum())
    n_loops = inter.n_loops
    lv = np.ones(n_loops, np.int64)
    loop_ptr, loop_idx = _odd_lists(inter.loops, n)
    counts = np.zeros((2 * n_class[0] + 1, 2 * n_class[1] + 1, 2 * n_loops + 1), np.int64)
    rng = np.random.default_rng(seed)
    steps = np.unique(rng.integers(1, 2**n, n_checks)) if n_checks else np.zeros(0, np.int64)
    out = np.zeros((len(steps), 3), np.int64)
    _gray_walk(n, tv, inter.term_class.astype(np.int64), inter.flip_ptr, inter.flip_terms, lv,
               loop_ptr, loop_idx, s0, s1, n_loops, n_class[0], n_class[1], n_loops,
               counts, steps.astype(np.int64), out)
    checks = np.column_stack([steps, out]) if n_checks else None
    return StateCounts(counts, tuple(n_class), n_loops, tuple(weights), n, interactions_digest(inter), checks)


def gray_state(step: int, n_sites: int) -> np.ndarray:
    """Spin configuration visited at ``step`` of the Gray-code walk."""
    g = step ^ (step >> 1)
    return np.array([-1 if (g >> b) & 1 else 1 for b in range(n_sites)], dtype=np.int64)


def enumerate_exact(inter: Interactions, beta: float) -> ExactResult:
    return count_states(inter).exact(beta)


# ------------------------------------------------------------- comparison


@dataclass
class ComparisonReport:
    z: dict
    n_sigma: float
    details: dict

    @property
    def passed(self) -> bool:
        return all(abs(v) <= self.n_sigma for v in self.z.values())

    def __str__(self):
        parts = [f"{k}: exact={self.details[k][0]:.6g} mc={self.details[k][1]:.6g}"
                 f"+-{self.details[k][2]:.2g} z={v:+.2f}" for k, v in self.z.items()]
        return ("PASS " if self.passed else "FAIL ") + "; ".join(parts)


def compare_with_mc(exact: ExactResult, mc: dict, n_sigma: float = 3.0) -> ComparisonReport:
    """z-scores of MC estimates against exact values.

    ``mc`` maps "E", "w", "w2" to ``(mean, standard error)`` and may carry a
    "provenance" dict, which must match the exact result's.
    """
    prov = mc.get("provenance")
    if prov is not None:
        for key in ("digest", "beta", "n_sites"):
            if key in prov and prov[key] != exact.provenance.get(key):
                raise ValueError(f"provenance mismatch on {key}: {prov[key]!r} vs {exact.provenance.get(key)!r}")
    z, details = {}, {}
    for key in ("E", "w", "w2"):
        mean, se = mc[key]
        ref = getattr(exact, key)
        if se > 0:
            z[key] = (mean - ref) / se
        else:
            z[key] = 0.0 if mean == ref else math.inf
        details[key] = (ref, mean, se)
    return ComparisonReport(z, n_sigma, details)


# ----------------------------------------------------------- golden files


def write_golden(path, header: dict, results: list[ExactResult]) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {GOLDEN_FORMAT}\n")
        for k in sorted(header):
            fh.write(f"# {k} = {header[k]}\n")
        fh.write("beta lnZ E E2 w w2 w3\n")
        for r in results:
            fh.write(" ".join(repr(float(v)) for v in (r.beta, r.lnZ, r.E, r.E2, r.w, r.w2, r.w3)) + "\n")


def read_golden(path) -> tuple[dict, list[dict]]:
    header, rows = {}, []
    with open(path) as fh:
        if fh.readline().strip() != f"# {GOLDEN_FORMAT}":
            raise ValueError(f"{path}: not a golden file")
        cols = None
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                header[k.strip()] = v.strip()
            elif cols is None:
                cols = line.split()
            else:
                rows.append(dict(zip(cols, map(float, line.split()))))
    return header, rows
