"""Metropolis + parallel tempering engine.

Random numbers
--------------
Every replica owns a xoshiro256** stream and the exchange step owns one
more. Streams live in a ``(n_replicas + 1, 4)`` uint64 array (row
``n_replicas`` is the exchange stream), so a checkpoint is just a copy of
that array. Streams are seeded from ``numpy.random.SeedSequence``:
``SeedSequence(entropy, spawn_key=key + (0,))`` seeds the exchange stream
and ``key + (1 + r,)`` seeds replica ``r``. See :func:`derive_seed`.

Sweep order
-----------
One sweep proposes a flip at sites ``0, 1, ..., N-1`` in order. One step of
a sample is one sweep of every slot followed by one exchange call. Exchange
call ``c`` attempts pairs ``(i, i+1)`` with ``i % 2 == c % 2``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .model import Interactions

log = logging.getLogger(__name__)

N_SUBBLOCKS = 8
MAX_LOG_BINS = 64

# ----------------------------------------------------------------- seeding


def derive_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Deterministic child seed for ``key`` (a tuple of non-negative ints)."""
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def stream_states(seed: np.random.SeedSequence, n_replicas: int) -> np.ndarray:
    """xoshiro256** states: rows 0..n-1 replicas, row n the exchange stream."""
    rows = []
    for sub in [(1 + r,) for r in range(n_replicas)] + [(0,)]:
        child = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + sub)
        st = child.generate_state(4, np.uint64)
        if not st.any():
            st[0] = 1
        rows.append(st)
    return np.array(rows, dtype=np.uint64)


# -------------------------------------------------------------- rng kernels


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def xoshiro_next(s, i):
    s0 = s[i, 0]
    s1 = s[i, 1]
    s2 = s[i, 2]
    s3 = s[i, 3]
    result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[i, 0] = s0
    s[i, 1] = s1
    s[i, 2] = s2
    s[i, 3] = s3
    return result


@nb.njit(cache=True)
def uniform(s, i):
    return np.float64(xoshiro_next(s, i) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


# ------------------------------------------------------------ core kernels


@nb.njit(cache=True)
def _term_values(spins, term_sites, term_size, term_sign, out):
    for t in range(term_sites.shape[0]):
        v = np.int64(term_sign[t])
        for k in range(term_size[t]):
            v *= np.int64(spins[term_sites[t, k]])
        out[t] = v


@nb.njit(cache=True)
def _energy_from_values(tv, term_weight):
    e = 0.0
    for t in range(tv.shape[0]):
        e -= term_weight[t] * tv[t]
    return e


@nb.njit(cache=True)
def _loop_sum(spins, loops):
    total = 0
    width = loops.shape[1]
    for k in range(loops.shape[0]):
        v = 1
        for j in range(width):
            s = loops[k, j]
            if s < 0:
                break
            v *= np.int64(spins[s])
        total += v
    return total


@nb.njit(cache=True)
def _sweep(spins, tv, energy, beta, flip_w, flip_ptr, flip_terms, rng, ridx, de_sign, table):
    """One Metropolis sweep of one replica; returns (accepted, new energy).

    ``table[m] = exp(-beta * m)`` for integral energy changes; an empty
    table selects the direct ``exp`` path (same values, slower).
    """
    n = spins.shape[0]
    use_table = table.shape[0] > 0
    accepted = 0
    for i in range(n):
        de = 0.0
        for q in range(flip_ptr[i], flip_ptr[i + 1]):
            de += flip_w[q] * tv[flip_terms[q]]
        trial = de_sign * de
        if trial > 0.0:
            if use_table:
                prob = table[int(trial)]
            else:
                prob = math.exp(-beta * trial)
            if uniform(rng, ridx) >= prob:
                continue
        spins[i] = -spins[i]
        for q in range(flip_ptr[i], flip_ptr[i + 1]):
            t = flip_terms[q]
            tv[t] = -tv[t]
        energy += de
        accepted += 1
    return accepted, energy


@nb.njit(cache=True)
def _exchange(betas, energies, at_slot, slot_of, rng, call_index, att, acc, m_att, m_acc, in_meas):
    n_slots = betas.shape[0]
    row = rng.shape[0] - 1
    start = call_index % 2
    for i in range(start, n_slots - 1, 2):
        a = at_slot[i]
        b = at_slot[i + 1]
        delta = (betas[i] - betas[i + 1]) * (energies[a] - energies[b])
        att[i] += 1
        if in_meas:
            m_att[i] += 1
        u = uniform(rng, row)
        if delta >= 0.0 or u < math.exp(delta):
            at_slot[i] = b
            at_slot[i + 1] = a
            slot_of[a] = i + 1
            slot_of[b] = i
            acc[i] += 1
            if in_meas:
                m_acc[i] += 1


@nb.njit(cache=True)
def _init_spins(spins, rng):
    for r in range(spins.shape[0]):
        for i in range(spins.shape[1]):
            spins[r, i] = 1 if uniform(rng, r) < 0.5 else -1


@nb.njit(cache=True)
def _run(
    spins, tv, energies, betas, at_slot, slot_of, rng,
    flip_w, flip_ptr, flip_terms, loops, tables,
    n_sweeps, sweep0, call0, interval, t_eq, t_meas, de_sign,
    swap_att, swap_acc,
    lb_cnt, lb_w, lb_E,
    blk, hist, acc_cnt, prop_cnt, m_swap_att, m_swap_acc,
):
    n_slots = betas.shape[0]
    n_sites = spins.shape[1]
    n_loops = loops.shape[0]
    n_blocks = blk.shape[1]
    for k in range(n_sweeps):
        s = sweep0 + k + 1
        in_meas = s > t_eq
        for slot in range(n_slots):
            r = at_slot[slot]
            a, e = _sweep(spins[r], tv[r], energies[r], betas[slot], flip_w,
                          flip_ptr, flip_terms, rng, r, de_sign, tables[slot])
            energies[r] = e
            if in_meas:
                acc_cnt[slot] += a
                prop_cnt[slot] += n_sites
        if n_slots > 1:
            _exchange(betas, energies, at_slot, slot_of, rng, call0 + k,
                      swap_att, swap_acc, m_swap_att, m_swap_acc, in_meas)
        if s % interval != 0:
            continue
        lb = 63
        while lb > 0 and (s >> lb) == 0:
            lb -= 1
        sub = ((s - (1 << lb)) * 8) >> lb
        for slot in range(n_slots):
            r = at_slot[slot]
            hs = _loop_sum(spins[r], loops) if n_loops > 0 else 0
            w = hs / n_loops if n_loops > 0 else 0.0
            e = energies[r]
            lb_cnt[slot, lb, sub] += 1
            lb_w[slot, lb, sub] += w
            lb_E[slot, lb, sub] += e
            if in_meas and s <= t_eq + t_meas:
                b = ((s - t_eq - 1) * n_blocks) // t_meas
                blk[slot, b, 0] += 1.0
                blk[slot, b, 1] += w
                blk[slot, b, 2] += w * w
                blk[slot, b, 3] += w * w * w
                blk[slot, b, 4] += e
                blk[slot, b, 5] += e * e
                hist[slot, (hs + n_loops) // 2] += 1


@nb.njit(cache=True)
def _all_energies(spins, tv, term_sites, term_size, term_sign, term_weight, out):
    for r in range(spins.shape[0]):
        _term_values(spins[r], term_sites, term_size, term_sign, tv[r])
        out[r] = _energy_from_values(tv[r], term_weight)


# ------------------------------------------------------------- data types


@dataclass(frozen=True)
class TemperatureLadder:
    T_min: float
    T_max: float
    n_T: int
    spacing: str = "linear"  # linear | geometric | explicit
    values: tuple | None = None

    def __post_init__(self):
        if self.spacing == "explicit":
            vals = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "n_T", len(vals))
            object.__setattr__(self, "T_min", vals[0])
            object.__setattr__(self, "T_max", vals[-1])
            if len(vals) >= 2 and any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError("explicit temperatures must be strictly increasing")
            if vals[0] <= 0:
                raise ValueError("temperatures must be positive")
            return
        if self.spacing not in ("linear", "geometric"):
            raise ValueError(f"unknown spacing rule {self.spacing!r}")
        if not 0 < self.T_min < self.T_max:
            raise ValueError(f"need 0 < T_min < T_max, got {self.T_min}, {self.T_max}")
        if self.n_T < 2:
            raise ValueError("a ladder needs at least 2 temperatures")

    @classmethod
    def explicit(cls, temperatures) -> "TemperatureLadder":
        return cls(0.0, 0.0, 0, spacing="explicit", values=tuple(temperatures))

    @property
    def temperatures(self) -> np.ndarray:
        if self.spacing == "explicit":
            return np.array(self.values, dtype=float)
        if self.spacing == "geometric":
            return np.geomspace(self.T_min, self.T_max, self.n_T)
        return np.linspace(self.T_min, self.T_max, self.n_T)

    @property
    def betas(self) -> np.ndarray:
        return 1.0 / self.temperatures


@dataclass(frozen=True)
class RunConfig:
    """Sweep budget of one disorder sample.

    ``2**b`` equilibration sweeps, then ``n_meas`` measurement sweeps
    (default ``2**b``), recording every ``interval`` sweeps.
    """

    b: int
    n_meas: int | None = None
    interval: int = 10
    n_samples: int = 1
    master_seed: int = 0
    checkpoint_interval: int | None = None
    max_doublings: int = 1
    recompute_interval: int = 1000
    n_blocks: int = 32

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if self.interval < 1:
            raise ValueError("measurement interval must be >= 1")
        if self.n_samples < 1:
            raise ValueError("N_sa must be >= 1")
        if self.n_meas is not None and self.n_meas < 1:
            raise ValueError("n_meas must be >= 1")

    @property
    def t_eq(self) -> int:
        return 2**self.b

    @property
    def meas_sweeps(self) -> int:
        return self.n_meas if self.n_meas is not None else 2**self.b


class ReplicaEnsemble:
    """Replicas of one disorder sample plus the replica <-> slot permutation.

    Replica ``r`` starts in slot ``r``. ``at_slot[i]`` is the replica
    currently simulated at ``betas[i]``; ``slot_of`` is its inverse.
    """

    def __init__(self, inter: Interactions, betas, seed: np.random.SeedSequence, *, de_sign: float = 1.0):
        self.inter = inter
        self.betas = np.ascontiguousarray(betas, dtype=np.float64)
        n = len(self.betas)
        self.rng = stream_states(seed, n)
        self.flip_w = 2.0 * inter.term_weight[inter.flip_terms]
        self.spins = np.empty((n, inter.n_sites), np.int8)
        _init_spins(self.spins, self.rng)
        self.tv = np.empty((n, inter.n_terms), np.int8)
        self.energies = np.empty(n, np.float64)
        self.recompute()
        self.at_slot = np.arange(n, dtype=np.int64)
        self.slot_of = np.arange(n, dtype=np.int64)
        self.swap_att = np.zeros(max(n - 1, 0), np.int64)
        self.swap_acc = np.zeros(max(n - 1, 0), np.int64)
        self.exchange_calls = 0
        self.de_sign = float(de_sign)
        self.tables = np.stack([self.acceptance_table(b) for b in self.betas])

    def acceptance_table(self, beta: float) -> np.ndarray:
        """``exp(-beta * m)`` for every reachable integral energy change ``m``.

        Empty when some coupling is not integral; kernels then call exp.
        """
        w = self.inter.term_weight
        if not np.all(w == np.round(w)):
            return np.zeros(0)
        per_site = np.add.reduceat(
            np.append(2.0 * np.abs(w[self.inter.flip_terms]), 0.0), self.inter.flip_ptr[:-1]
        ) if len(self.inter.flip_terms) else np.zeros(1)
        per_site = np.where(np.diff(self.inter.flip_ptr) > 0, per_site, 0.0)
        top = int(per_site.max()) if len(per_site) else 0
        return np.array([math.exp(-beta * m) for m in range(top + 1)])

    @property
    def n_slots(self) -> int:
        return len(self.betas)

    def recompute(self) -> np.ndarray:
        """Recompute term values and energies from the spins; return energies."""
        i = self.inter
        _all_energies(self.spins, self.tv, i.term_sites, i.term_size, i.term_sign, i.term_weight, self.energies)
        return self.energies

    def check_energies(self) -> None:
        cached = self.energies.copy()
        fresh = self.recompute()
        integral = np.all(self.inter.term_weight == np.round(self.inter.term_weight))
        same = np.array_equal(cached, fresh) if integral else np.allclose(cached, fresh, rtol=0, atol=1e-9)
        if not same:
            raise RuntimeError(f"cached energies drifted: {cached} vs recomputed {fresh}")

    def sweep(self, slot: int, beta: float | None = None) -> float:
        i = self.inter
        r = self.at_slot[slot]
        table = self.tables[slot] if beta is None else self.acceptance_table(beta)
        beta = self.betas[slot] if beta is None else beta
        a, e = _sweep(self.spins[r], self.tv[r], self.energies[r], float(beta), self.flip_w,
                      i.flip_ptr, i.flip_terms, self.rng, r, self.de_sign, table)
        self.energies[r] = e
        return a / i.n_sites

    def exchange(self) -> dict:
        att0, acc0 = self.swap_att.copy(), self.swap_acc.copy()
        if self.n_slots > 1:
            _exchange(self.betas, self.energies, self.at_slot, self.slot_of, self.rng,
                      self.exchange_calls, self.swap_att, self.swap_acc, self.swap_att, self.swap_acc, False)
        self.exchange_calls += 1
        return {"attempted": self.swap_att - att0, "accepted": self.swap_acc - acc0}

    def slot_spins(self, slot: int) -> np.ndarray:
        return self.spins[self.at_slot[slot]]

    def slot_energy(self, slot: int) -> float:
        return float(self.energies[self.at_slot[slot]])


def metropolis_sweep(ensemble: ReplicaEnsemble, slot: int, beta: float | None = None) -> float:
    """Sweep the replica in ``slot`` once; returns the accepted fraction."""
    return ensemble.sweep(slot, beta)


def pt_exchange(ensemble: ReplicaEnsemble) -> dict:
    """One round of adjacent-pair exchange attempts (even/odd alternating)."""
    return ensemble.exchange()


# ------------------------------------------------------------ equilibration


@dataclass
class LogBinnedSeries:
    """Sums over logarithmic windows of MC time for one temperature slot.

    Bin ``k`` holds sweeps ``s`` with ``2**k <= s < 2**(k+1)``, split into
    :data:`N_SUBBLOCKS` equal sub-blocks used for error estimates.
    """

    count: np.ndarray  # (MAX_LOG_BINS, N_SUBBLOCKS)
    sum_w: np.ndarray
    sum_E: np.ndarray

    @classmethod
    def empty(cls) -> "LogBinnedSeries":
        shape = (MAX_LOG_BINS, N_SUBBLOCKS)
        return cls(np.zeros(shape, np.int64), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_series(cls, sweeps, w, E) -> "LogBinnedSeries":
        out = cls.empty()
        for s, wi, ei in zip(np.asarray(sweeps, dtype=np.int64), w, E):
            if s < 1:
                raise ValueError("sweep indices start at 1")
            k = int(s).bit_length() - 1
            j = ((int(s) - (1 << k)) * N_SUBBLOCKS) >> k
            out.count[k, j] += 1
            out.sum_w[k, j] += wi
            out.sum_E[k, j] += ei
        return out

    def populated(self) -> np.ndarray:
        return np.flatnonzero(self.count.sum(axis=1) > 0)

    def means(self, obs: str) -> np.ndarray:
        sums = self.sum_w if obs == "w" else self.sum_E
        n = self.count.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums.sum(axis=1) / n

    def errors(self, obs: str) -> np.ndarray:
        """Batch-means error from sub-blocks (falls back to 0 with < 2 blocks)."""
        sums = self.sum_w if obs == "w" else self.sum_E
        out = np.zeros(MAX_LOG_BINS)
        for k in self.populated():
            filled = self.count[k] > 0
            if filled.sum() < 2:
                continue
            sub = sums[k][filled] / self.count[k][filled]
            out[k] = sub.std(ddof=1) / math.sqrt(len(sub))
        return out


@dataclass
class EquilibrationStatus:
    bins: np.ndarray  # bin index k of each reported window
    means: dict
    errors: dict
    passed: bool
    message: str = ""


class EquilibrationError(ValueError):
    pass


def check_equilibration(series, observables=("E", "w"), *, n_last: int = 3, n_sigma: float = 2.0,
                        min_bins: int = 8) -> EquilibrationStatus:
    """Log-binning test: the last ``n_last`` bins must agree pairwise.

    ``series`` is one :class:`LogBinnedSeries` or a list of them (one per
    disorder sample, same temperature). With several samples, bin means are
    disorder averages and errors are standard errors over samples; a single
    sample uses sub-block (batch-means) errors. A trailing bin holding
    less than half of its predecessor's count is incomplete and ignored.
    """
    group = [series] if isinstance(series, LogBinnedSeries) else list(series)
    if not group:
        raise EquilibrationError("no series given")
    common = set(group[0].populated().tolist())
    for s in group[1:]:
        common &= set(s.populated().tolist())
    bins = np.array(sorted(common), dtype=np.int64)
    # a run ending at sweep 2^k leaves one point in bin k; such a partial bin is dropped
    if len(bins) >= 2 and any(2 * s.count[bins[-1]].sum() < s.count[bins[-2]].sum() for s in group):
        bins = bins[:-1]
    if len(bins) < min_bins:
        raise EquilibrationError(f"need >= {min_bins} logarithmic bins, have {len(bins)}")
    means, errors = {}, {}
    for obs in observables:
        per = np.array([s.means(obs)[bins] for s in group])
        if len(group) >= 2:
            means[obs] = per.mean(axis=0)
            errors[obs] = per.std(axis=0, ddof=1) / math.sqrt(len(group))
        else:
            means[obs] = per[0]
            errors[obs] = group[0].errors(obs)[bins]
    passed = True
    worst = ""
    for obs in observables:
        m, e = means[obs][-n_last:], errors[obs][-n_last:]
        for i in range(n_last):
            for j in range(i + 1, n_last):
                diff = abs(m[i] - m[j])
                tol = n_sigma * math.hypot(e[i], e[j])
                if diff > tol:
                    passed = False
                    worst = f"{obs}: bins {bins[-n_last + i]} and {bins[-n_last + j]} differ by {diff:.3g} > {tol:.3g}"
    return EquilibrationStatus(bins, means, errors, passed, worst or "last bins agree")


# ----------------------------------------------------------- sample driver


@dataclass
class SlotMoments:
    """Thermal moments of one temperature slot over the measurement phase."""

    n: int
    mean_w: float
    mean_w2: float
    mean_w3: float
    mean_E: float
    mean_E2: float


@dataclass
class SampleResult:
    temperatures: np.ndarray
    moments: list  # SlotMoments per slot
    blocks: np.ndarray  # (n_slots, n_blocks, 6): n, w, w2, w3, E, E2 sums
    hist: np.ndarray  # (n_slots, n_loops + 1) counts of the loop sum
    acc_frac: np.ndarray
    swap_rate: np.ndarray  # pair (i, i+1), length n_slots - 1
    logbins: list  # LogBinnedSeries per slot
    equilibration: EquilibrationStatus | None
    b_final: int
    sweeps: int
    n_loops: int = 0
    meta: dict = field(default_factory=dict)


class SampleRun:
    """Resumable state machine for one disorder sample."""

    def __init__(self, inter: Interactions, ladder: TemperatureLadder, run: RunConfig,
                 seed: np.random.SeedSequence, *, de_sign: float = 1.0):
        self.inter = inter
        self.ladder = ladder
        self.run = run
        self.ens = ReplicaEnsemble(inter, ladder.betas, seed, de_sign=de_sign)
        n = self.ens.n_slots
        self.sweeps = 0
        self.b = run.b
        self.t_eq = run.t_eq
        self.t_meas = run.meas_sweeps
        self.doublings = 0
        self.lb_cnt = np.zeros((n, MAX_LOG_BINS, N_SUBBLOCKS), np.int64)
        self.lb_w = np.zeros((n, MAX_LOG_BINS, N_SUBBLOCKS))
        self.lb_E = np.zeros((n, MAX_LOG_BINS, N_SUBBLOCKS))
        self._reset_measurement()
        self.finished = False
        self.equilibration = None

    def _reset_measurement(self):
        n = self.ens.n_slots
        self.blk = np.zeros((n, self.run.n_blocks, 6))
        self.hist = np.zeros((n, self.inter.n_loops + 1), np.int64)
        self.acc_cnt = np.zeros(n, np.int64)
        self.prop_cnt = np.zeros(n, np.int64)
        self.m_swap_att = np.zeros(max(n - 1, 0), np.int64)
        self.m_swap_acc = np.zeros(max(n - 1, 0), np.int64)

    @property
    def target(self) -> int:
        return self.t_eq + self.t_meas

    def advance(self, n_sweeps: int) -> None:
        e, i = self.ens, self.inter
        _run(
            e.spins, e.tv, e.energies, e.betas, e.at_slot, e.slot_of, e.rng,
            e.flip_w, i.flip_ptr, i.flip_terms, i.loops, e.tables,
            int(n_sweeps), self.sweeps, e.exchange_calls, self.run.interval,
            self.t_eq, self.t_meas, e.de_sign,
            e.swap_att, e.swap_acc,
            self.lb_cnt, self.lb_w, self.lb_E,
            self.blk, self.hist, self.acc_cnt, self.prop_cnt, self.m_swap_att, self.m_swap_acc,
        )
        self.sweeps += int(n_sweeps)
        if e.n_slots > 1:
            e.exchange_calls += int(n_sweeps)

    def step_until(self, stop: int) -> None:
        """Advance to sweep ``stop`` (capped at the current target)."""
        rec = self.run.recompute_interval
        stop = min(stop, self.target)
        while self.sweeps < stop:
            nxt = min(stop, (self.sweeps // rec + 1) * rec)
            self.advance(nxt - self.sweeps)
            if self.sweeps % rec == 0:
                self.ens.check_energies()

    def finish_phase(self) -> bool:
        """Called at the target; returns True when the sample is complete."""
        self.ens.check_energies()
        status = self._check_lowest()
        self.equilibration = status
        if status is not None and not status.passed and self.doublings < self.run.max_doublings:
            self.doublings += 1
            self.b += 1
            self.t_eq = max(2**self.b, self.sweeps)
            if self.run.n_meas is None:
                self.t_meas = 2**self.b
            self._reset_measurement()
            log.info("equilibration check failed (%s); extending to b=%d", status.message, self.b)
            return False
        if status is not None and not status.passed:
            warnings.warn(f"equilibration check failed after {self.doublings} doublings: {status.message}",
                          RuntimeWarning, stacklevel=2)
        self.finished = True
        return True

    def _check_lowest(self):
        series = self.logbins(0)
        try:
            return check_equilibration(series)
        except EquilibrationError:
            return None

    def logbins(self, slot: int) -> LogBinnedSeries:
        return LogBinnedSeries(self.lb_cnt[slot].copy(), self.lb_w[slot].copy(), self.lb_E[slot].copy())

    def run_to_completion(self, checkpoint=None, halt_after: int | None = None) -> bool:
        """Run until finished; returns False if halted early by ``halt_after``.

        ``checkpoint`` is a callable invoked with ``self`` every
        ``run.checkpoint_interval`` sweeps.
        """
        ci = self.run.checkpoint_interval
        while not self.finished:
            stop = self.target
            if ci:
                stop = min(stop, (self.sweeps // ci + 1) * ci)
            if halt_after is not None:
                stop = min(stop, halt_after)
            self.step_until(stop)
            if ci and checkpoint is not None and self.sweeps % ci == 0:
                checkpoint(self)
            if halt_after is not None and self.sweeps >= halt_after and self.sweeps < self.target:
                return False
            if self.sweeps >= self.target:
                self.finish_phase()
                if halt_after is not None and self.sweeps >= halt_after and not self.finished:
                    return False
        return True

    def result(self) -> SampleResult:
        n = self.ens.n_slots
        moments = []
        for slot in range(n):
            tot = self.blk[slot].sum(axis=0)
            cnt = int(tot[0])
            if cnt:
                moments.append(SlotMoments(cnt, *(tot[1:] / cnt)))
            else:
                moments.append(SlotMoments(0, *([math.nan] * 5)))
        with np.errstate(invalid="ignore", divide="ignore"):
            acc = self.acc_cnt / self.prop_cnt
            swap = self.m_swap_acc / self.m_swap_att if n > 1 else np.zeros(0)
        return SampleResult(
            temperatures=self.ladder.temperatures,
            moments=moments,
            blocks=self.blk.copy(),
            hist=self.hist.copy(),
            acc_frac=acc,
            swap_rate=swap,
            logbins=[self.logbins(s) for s in range(n)],
            equilibration=self.equilibration,
            b_final=self.b,
            sweeps=self.sweeps,
            n_loops=self.inter.n_loops,
        )

    # -- checkpointing

    def state(self) -> dict:
        e = self.ens
        return {
            "spins": e.spins.copy(), "energies": e.energies, "rng": e.rng,
            "at_slot": e.at_slot, "slot_of": e.slot_of, "swap_att": e.swap_att, "swap_acc": e.swap_acc,
            "exchange_calls": np.int64(e.exchange_calls), "sweeps": np.int64(self.sweeps),
            "b": np.int64(self.b), "t_eq": np.int64(self.t_eq), "t_meas": np.int64(self.t_meas),
            "doublings": np.int64(self.doublings),
            "lb_cnt": self.lb_cnt, "lb_w": self.lb_w, "lb_E": self.lb_E,
            "blk": self.blk, "hist": self.hist, "acc_cnt": self.acc_cnt, "prop_cnt": self.prop_cnt,
            "m_swap_att": self.m_swap_att, "m_swap_acc": self.m_swap_acc,
        }

    def restore(self, st) -> None:
        e = self.ens
        e.spins[...] = st["spins"]
        e.rng[...] = st["rng"]
        e.at_slot[...] = st["at_slot"]
        e.slot_of[...] = st["slot_of"]
        e.swap_att[...] = st["swap_att"]
        e.swap_acc[...] = st["swap_acc"]
        e.exchange_calls = int(st["exchange_calls"])
        e.recompute()
        if not np.array_equal(e.energies, st["energies"]):
            raise RuntimeError("checkpoint energies do not match its spins")
        self.sweeps = int(st["sweeps"])
        self.b = int(st["b"])
        self.t_eq = int(st["t_eq"])
        self.t_meas = int(st["t_meas"])
        self.doublings = int(st["doublings"])
        for name in ("lb_cnt", "lb_w", "lb_E", "blk", "hist", "acc_cnt", "prop_cnt", "m_swap_att", "m_swap_acc"):
            getattr(self, name)[...] = st[name]


def run_disorder_sample(inter: Interactions, ladder: TemperatureLadder, run: RunConfig,
                        sample_seed: np.random.SeedSequence, **kwargs) -> SampleResult:
    """Initialize, equilibrate and measure one disorder sample."""
    sim = SampleRun(inter, ladder, run, sample_seed, de_sign=kwargs.pop("de_sign", 1.0))
    sim.run_to_completion(**kwargs)
    return sim.result()
