"""Wilson-loop and energy observables, thermal moments and estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeGeometry
from .model import CouplingSet, DisorderRealization, energy

# Orientation of the skewness order parameter.
#   "standard": the plain third standardized central moment.
#   "ordered":  sign flipped so that a distribution with its bulk at high w
#               and a tail toward low w (the ordered side) is positive.
CONVENTIONS = ("standard", "ordered")


@dataclass(frozen=True)
class MeasurementRecord:
    w: float
    E: float


def wilson_average(g: LatticeGeometry, sigma) -> float:
    """Mean of the raw six-spin products over all hexagons (no disorder signs)."""
    sigma = np.asarray(sigma, dtype=np.int64)
    return float(sigma[g.hexagon_terms].prod(axis=1).sum()) / g.n_hex


def measure(g: LatticeGeometry, gamma: DisorderRealization, c: CouplingSet, sigma) -> MeasurementRecord:
    return MeasurementRecord(wilson_average(g, sigma), energy(g, gamma, c, sigma))


@dataclass
class ThermalMoments:
    """Per-sample thermal averages at one temperature.

    Every field is an array over disorder samples (or a scalar for one).
    """

    mean_w: np.ndarray
    mean_w2: np.ndarray
    mean_w3: np.ndarray
    mean_E: np.ndarray
    mean_E2: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        for name in ("mean_w", "mean_w2", "mean_w3", "mean_E", "mean_E2", "n"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))

    @property
    def n_samples(self) -> int:
        return len(self.mean_w)

    @classmethod
    def from_series(cls, w_series, E_series=None) -> "ThermalMoments":
        """Moments from raw time series, one 1-d array per sample."""
        rows = []
        for k, w in enumerate(w_series):
            w = np.asarray(w, dtype=float)
            E = np.zeros_like(w) if E_series is None else np.asarray(E_series[k], dtype=float)
            rows.append((w.mean(), (w**2).mean(), (w**3).mean(), E.mean(), (E**2).mean(), len(w)))
        return cls(*map(np.array, zip(*rows)))

    def subset(self, idx) -> "ThermalMoments":
        return ThermalMoments(self.mean_w[idx], self.mean_w2[idx], self.mean_w3[idx],
                              self.mean_E[idx], self.mean_E2[idx], self.n[idx])

    def shifted(self, c: float) -> "ThermalMoments":
        """Moments of ``w + c`` (exact binomial expansion)."""
        m1, m2, m3 = self.mean_w, self.mean_w2, self.mean_w3
        return ThermalMoments(m1 + c, m2 + 2 * c * m1 + c * c, m3 + 3 * c * m2 + 3 * c * c * m1 + c**3,
                              self.mean_E, self.mean_E2, self.n)


def central_moments(m: ThermalMoments) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample thermal ``<(w-mu)^2>`` and ``<(w-mu)^3>`` about the global mean."""
    mu = m.mean_w.mean()
    m1, m2, m3 = m.mean_w, m.mean_w2, m.mean_w3
    c2 = m2 - 2 * mu * m1 + mu * mu
    c3 = m3 - 3 * mu * m2 + 3 * mu * mu * m1 - mu**3
    return c2, c3


def skewness(m: ThermalMoments, convention: str = "standard") -> float:
    """[<w~^3>] / [<w~^2>]^(3/2) with w~ = w - [<w>].

    Disorder averages of numerator and denominator are taken separately.
    Returns ``nan`` when the denominator vanishes (to rounding).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if m.n_samples < 1:
        raise ValueError("no samples")
    c2, c3 = central_moments(m)
    den = c2.mean()
    # cancellation in <w^2> - mu^2 leaves rounding noise for constant w
    # the second clause catches den**1.5 underflowing for subnormal-scale w
    if not den > 1e-12 * max(float(m.mean_w2.mean()), 1e-300) or den**1.5 == 0.0:
        return math.nan
    z = c3.mean() / den**1.5
    z = float(z)
    return -z if convention == "ordered" else z


def bootstrap_skewness(m: ThermalMoments, n_boot: int = 1000, seed=0, convention: str = "standard"):
    """(estimate, error): error is the std of ζ over resampled disorder samples."""
    rng = np.random.default_rng(seed)
    n = m.n_samples
    vals = np.empty(n_boot)
    for k in range(n_boot):
        vals[k] = skewness(m.subset(rng.integers(0, n, n)), convention)
    good = vals[np.isfinite(vals)]
    err = float(good.std()) if len(good) > 1 else math.nan
    return skewness(m, convention), err


def specific_heat(m: ThermalMoments, beta: float, n_sites: int) -> float:
    """beta^2 [<E^2> - <E>^2]_av / N_sites."""
    var = m.mean_E2 - m.mean_E**2
    return float(beta * beta * var.mean() / n_sites)


def bootstrap_mean(values, n_boot: int = 1000, seed=0) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(values), (n_boot, len(values)))
    return float(values.mean()), float(values[idx].mean(axis=1).std())


def batch_means_error(block_sums: np.ndarray, column: int) -> tuple[float, float]:
    """Mean and standard error of a moment from per-block sums.

    ``block_sums`` rows are ``(n, sum_w, sum_w2, sum_w3, sum_E, sum_E2)``.
    """
    blocks = block_sums[block_sums[:, 0] > 0]
    n = blocks[:, 0]
    means = blocks[:, column] / n
    total = blocks[:, column].sum() / n.sum()
    if len(blocks) < 2:
        return float(total), math.nan
    return float(total), float(means.std(ddof=1) / math.sqrt(len(blocks)))


# ------------------------------------------------------------- histograms


@dataclass
class WilsonHistogram:
    edges: np.ndarray
    counts: np.ndarray
    mass: np.ndarray  # counts / total, sums to 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def histogram(records, bins=50, range=(-1.0, 1.0)) -> WilsonHistogram:
    """Normalized histogram of pooled w values (or MeasurementRecords)."""
    w = np.array([r.w if isinstance(r, MeasurementRecord) else r for r in records], dtype=float)
    if len(w) == 0:
        raise ValueError("cannot histogram an empty record set")
    counts, edges = np.histogram(w, bins=bins, range=range)
    return WilsonHistogram(edges, counts, counts / counts.sum())


def histogram_from_support(counts, n_loops: int, bins=50, range=(-1.0, 1.0)) -> WilsonHistogram:
    """Rebin exact loop-sum counts (index k <-> w = -1 + 2k/n_loops)."""
    counts = np.asarray(counts)
    w = -1.0 + 2.0 * np.arange(len(counts)) / n_loops
    if counts.sum() == 0:
        raise ValueError("cannot histogram an empty record set")
    c, edges = np.histogram(w, bins=bins, range=range, weights=counts)
    return WilsonHistogram(edges, c, c / c.sum())


def support_range(counts, n_loops: int, pad: float = 0.0) -> tuple[float, float]:
    """Smallest [w_lo, w_hi] covering the nonzero support of exact counts."""
    nz = np.flatnonzero(np.asarray(counts))
    lo = -1.0 + 2.0 * nz[0] / n_loops
    hi = -1.0 + 2.0 * nz[-1] / n_loops
    return lo - pad, hi + pad
