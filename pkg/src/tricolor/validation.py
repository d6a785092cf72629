"""Self-check suites: geometry, gauge, oracle, estimators.

Each suite returns a :class:`SuiteReport`; failures are reported, never raised.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeSpec, build_lattice, validate_geometry
from .mc import RunConfig, SampleRun, TemperatureLadder, derive_seed
from .model import (CouplingSet, NoiseParameters, apply_gauge, clean_disorder, energy, lattice_interactions,
                    nishimori_temperature, sample_disorder)
from .observables import ThermalMoments, batch_means_error, skewness, specific_heat, wilson_average
from .oracle import compare_with_mc, count_states

SUITES = ("geometry", "gauge", "oracle", "estimators")

ORACLE_TEMPERATURES = (0.8, 1.5, 3.0)
ORACLE_SEED = 20240  # fixed disorder realization for the p = q = 0.1 comparison
ORACLE_SE_MAX = 0.01


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def lines(self) -> list[str]:
        out = [f"{'PASS' if c.passed else 'FAIL'} {self.suite}/{c.name}: {c.detail}" for c in self.checks]
        out.append(f"{'PASS' if self.passed else 'FAIL'} {self.suite} ({len(self.checks)} checks, {self.seconds:.1f} s)")
        return out


def geometry_suite() -> SuiteReport:
    rep = SuiteReport("geometry")
    t0 = time.perf_counter()
    for L, M, deg in ((6, 6, False), (9, 8, False), (3, 2, False), (3, 1, True)):
        g = build_lattice(LatticeSpec(L, M, degenerate_ok=deg))
        r = validate_geometry(g)
        rep.add(f"L{L}M{M}", r.ok, "all invariants hold" if r.ok else str(r.first_failure))
    g = build_lattice(LatticeSpec(6, 6))
    counts = (g.n_sites, g.n_five, g.n_hex)
    rep.add("counts(6,6)", counts == (648, 432, 216), f"(N_sites, N_5, N_hex) = {counts}")
    rep.seconds = time.perf_counter() - t0
    return rep


def gauge_suite(n_trials: int = 10_000, seed: int = 0, L: int = 6, M: int = 6, p: float = 0.3) -> SuiteReport:
    """Random (sigma, gamma, generator) triples; energy and w must not change at all."""
    rep = SuiteReport("gauge")
    t0 = time.perf_counter()
    g = build_lattice(LatticeSpec(L, M))
    c = CouplingSet()
    rng = np.random.default_rng(seed)
    gamma = None
    n_bad_e = n_bad_w = 0
    for k in range(n_trials):
        if k % 100 == 0:
            gamma = sample_disorder(g, NoiseParameters(p), rng.integers(2**63))
        sigma = rng.choice(np.array([-1, 1], np.int8), g.n_sites)
        gen = g.gauge_generators[rng.integers(g.n_hex)]
        moved = apply_gauge(sigma, gen)
        n_bad_e += energy(g, gamma, c, sigma) != energy(g, gamma, c, moved)
        n_bad_w += wilson_average(g, sigma) != wilson_average(g, moved)
    rep.add("energy", n_bad_e == 0, f"{n_bad_e} of {n_trials} trials changed the energy")
    rep.add("wilson", n_bad_w == 0, f"{n_bad_w} of {n_trials} trials changed w")
    rep.seconds = time.perf_counter() - t0
    return rep


def oracle_comparison(p: float, *, de_sign: float = 1.0, temperatures=ORACLE_TEMPERATURES, n_meas: int = 2**23,
                      seed: int = 0, disorder_seed: int = ORACLE_SEED) -> list[tuple]:
    """MC vs exact enumeration on the degenerate 27-spin geometry (L=3, M=1).

    Returns ``(T, ComparisonReport, max standard error)`` per temperature.
    """
    g = build_lattice(LatticeSpec(3, 1, degenerate_ok=True))
    gamma = clean_disorder(g) if p == 0 else sample_disorder(g, NoiseParameters(p), disorder_seed)
    inter = lattice_interactions(g, gamma, CouplingSet())
    counts = count_states(inter)
    ladder = TemperatureLadder.explicit(temperatures)
    run = RunConfig(b=12, n_meas=n_meas, interval=1, max_doublings=0)
    sim = SampleRun(inter, ladder, run, derive_seed(seed, int(round(p * 1000))), de_sign=de_sign)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sim.run_to_completion()
    res = sim.result()
    out = []
    for j, T in enumerate(ladder.temperatures):
        exact = counts.exact(1.0 / T)
        mc = {key: batch_means_error(res.blocks[j], col) for key, col in (("E", 4), ("w", 1), ("w2", 2))}
        out.append((float(T), compare_with_mc(exact, mc, n_sigma=3.0), max(se for _, se in mc.values())))
    return out


def oracle_suite(*, de_sign: float = 1.0, n_meas: int = 2**23) -> SuiteReport:
    rep = SuiteReport("oracle")
    t0 = time.perf_counter()
    for p in (0.0, 0.1):
        for T, cmp, se in oracle_comparison(p, de_sign=de_sign, n_meas=n_meas):
            rep.add(f"p={p}/T={T}", cmp.passed and se <= ORACLE_SE_MAX, f"{cmp} (max SE {se:.4f})")
    rep.seconds = time.perf_counter() - t0
    return rep


def estimators_suite(seed: int = 0) -> SuiteReport:
    rep = SuiteReport("estimators")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    draws = rng.exponential(size=100_000)
    z = skewness(ThermalMoments.from_series([draws]))
    rep.add("skewness(exponential)", abs(z - 2.0) <= 0.10, f"zeta = {z:.4f} (target 2.00 +- 0.10)")
    t = nishimori_temperature(0.119203)
    rep.add("nishimori(0.119203)", abs(t - 1.0) <= 1e-6, f"T_N = {t:.9f}")
    flat = ThermalMoments.from_series([np.full(1000, 0.5)], [np.full(1000, -3.0)])
    c = specific_heat(flat, 1.3, 100)
    rep.add("specific_heat(constant)", c == 0.0, f"c = {c!r}")
    sym = ThermalMoments.from_series([np.array([-0.5, 0.5] * 500)])
    zs = skewness(sym)
    rep.add("skewness(symmetric)", zs == 0.0, f"zeta = {zs!r}")
    rep.add("convention", math.isclose(skewness(ThermalMoments.from_series([draws]), "ordered"), -z),
            "ordered convention flips the sign")
    rep.seconds = time.perf_counter() - t0
    return rep


def run_suite(name: str, *, de_sign: float = 1.0) -> SuiteReport:
    if name == "geometry":
        return geometry_suite()
    if name == "gauge":
        return gauge_suite()
    if name == "oracle":
        return oracle_suite(de_sign=de_sign)
    if name == "estimators":
        return estimators_suite()
    raise ValueError(f"unknown suite {name!r} (choose from {', '.join(SUITES)})")
