"""Transition location, finite-size extrapolation and the threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.signal import find_peaks

from .model import nishimori_temperature
from .observables import ThermalMoments, WilsonHistogram, bootstrap_skewness, specific_heat


@dataclass
class SkewnessCurve:
    temperatures: np.ndarray
    zeta: np.ndarray
    errors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.temperatures = np.asarray(self.temperatures, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.errors = np.asarray(self.errors, dtype=float)
        if not (len(self.temperatures) == len(self.zeta) == len(self.errors)):
            raise ValueError("curve arrays differ in length")
        if np.any(np.diff(self.temperatures) <= 0):
            raise ValueError("curve temperatures must be strictly increasing")


@dataclass
class TransitionEstimate:
    T_c: float
    error: float
    N: int | None = None
    detected: bool = True
    message: str = ""
    bracket: tuple | None = None
    n_crossings: int = 0
    n_significant: int = 0


def skewness_curve(temperatures, moments: list[ThermalMoments], *, n_boot: int = 1000, seed: int = 0,
                   convention: str = "ordered", meta: dict | None = None) -> SkewnessCurve:
    """ζ(T) with bootstrap-over-samples errors from per-temperature moments."""
    zeta, err = [], []
    for k, m in enumerate(moments):
        z, e = bootstrap_skewness(m, n_boot=n_boot, seed=(seed, k), convention=convention)
        zeta.append(z)
        err.append(e)
    meta = dict(meta or {})
    meta.setdefault("convention", convention)
    return SkewnessCurve(temperatures, zeta, err, meta)


def _crossings(zeta):
    """Indices i with zeta[i] > 0 >= zeta[i+1]."""
    return [i for i in range(len(zeta) - 1) if zeta[i] > 0 and zeta[i + 1] <= 0]


def find_zero_crossing(curve: SkewnessCurve, *, near: float | None = None, n_resample: int = 2000,
                       seed: int = 0) -> TransitionEstimate:
    """Lowest-temperature +→− sign change of ζ(T), linearly interpolated.

    A crossing is significant when both bracketing points exceed their
    error bars in magnitude. The lowest significant crossing wins; if none
    is significant, the crossing closest to ``near`` (e.g. a specific-heat
    peak) is used, else the lowest one.
    """
    T, z, e = curve.temperatures, curve.zeta, curve.errors
    N = curve.meta.get("N")
    if len(T) < 2:
        raise ValueError("a curve needs at least 2 points")
    cands = _crossings(z)
    if not cands:
        return TransitionEstimate(math.nan, math.nan, N, detected=False, message="no transition detected")
    err = np.nan_to_num(e, nan=0.0)
    significant = [i for i in cands if abs(z[i]) > err[i] and abs(z[i + 1]) > err[i + 1]]
    if significant:
        i = significant[0]
        why = "lowest significant crossing"
    elif near is not None:
        i = min(cands, key=lambda j: abs(0.5 * (T[j] + T[j + 1]) - near))
        why = "no significant crossing; nearest to reference temperature"
    else:
        i = cands[0]
        why = "no significant crossing; lowest crossing"
    t_c = _interp_root(T[i], T[i + 1], z[i], z[i + 1])
    if err[i] > 0 or err[i + 1] > 0:
        rng = np.random.default_rng(seed)
        zl = z[i] + err[i] * rng.standard_normal(n_resample)
        zh = z[i + 1] + err[i + 1] * rng.standard_normal(n_resample)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.clip(zl / (zl - zh), 0.0, 1.0)
        frac = frac[np.isfinite(frac)]
        error = float((T[i] + frac * (T[i + 1] - T[i])).std())
    else:
        error = 0.0
    return TransitionEstimate(float(t_c), error, N, True, why, (float(T[i]), float(T[i + 1])),
                              len(cands), len(significant))


def _interp_root(t0, t1, z0, z1):
    if z1 == 0:
        return t1
    return t0 + z0 / (z0 - z1) * (t1 - t0)


@dataclass
class Extrapolation:
    T_c: float
    error: float
    slope: float
    chi2: float
    n_points: int


def extrapolate_tc(estimates: list[TransitionEstimate]) -> Extrapolation:
    """Weighted linear fit of T_c*(N) against 1/N; the intercept is T_c(∞)."""
    pts = [e for e in estimates if e.detected]
    if len(pts) < 2:
        raise ValueError("extrapolation needs at least 2 system sizes")
    x = np.array([1.0 / e.N for e in pts])
    y = np.array([e.T_c for e in pts])
    s = np.array([e.error for e in pts], dtype=float)
    if len(set(x.tolist())) < 2:
        raise ValueError("extrapolation needs at least 2 distinct sizes")
    weighted = np.all(np.isfinite(s)) and np.all(s > 0)
    w = 1.0 / s**2 if weighted else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    resid = y - X @ coef
    chi2 = float((w * resid**2).sum())
    if weighted:
        cov = np.linalg.inv(A)
    else:
        dof = len(x) - 2
        cov = np.linalg.inv(A) * (chi2 / dof if dof > 0 else math.nan)
    return Extrapolation(float(coef[0]), float(math.sqrt(cov[0, 0])) if np.isfinite(cov[0, 0]) else math.nan,
                         float(coef[1]), chi2, len(x))


# ------------------------------------------------------------ cross-checks


@dataclass
class PeakSplit:
    T: float
    double: bool
    ratio: float  # weight of the low-w peak / weight of the high-w peak
    split: float | None = None


def peak_split(h: WilsonHistogram, T: float = math.nan, prominence: float = 0.05) -> PeakSplit:
    """Split f(w) at the minimum between its two largest local maxima."""
    mass = np.asarray(h.mass, dtype=float)
    padded = np.concatenate([[0.0], mass, [0.0]])
    peaks, props = find_peaks(padded, prominence=prominence * mass.max())
    peaks = peaks - 1
    if len(peaks) < 2:
        return PeakSplit(T, False, math.nan)
    top2 = np.sort(peaks[np.argsort(mass[peaks])[-2:]])
    a, b = top2
    m = a + int(np.argmin(mass[a : b + 1]))
    low = mass[:m].sum() + 0.5 * mass[m]
    high = mass[m + 1 :].sum() + 0.5 * mass[m]
    return PeakSplit(T, True, float(low / high), float(h.centers[m]))


@dataclass
class CrossCheck:
    T_c: float
    conclusive: bool
    message: str = ""
    details: list = field(default_factory=list)


def maxwell_crosscheck(histograms: list[tuple[float, WilsonHistogram]], prominence: float = 0.05) -> CrossCheck:
    """Temperature where the two peak weights of f(w) become equal.

    Interpolates log(ratio) linearly in T between consecutive double-peaked
    histograms.
    """
    splits = [peak_split(h, T, prominence) for T, h in sorted(histograms, key=lambda th: th[0])]
    dbl = [s for s in splits if s.double and s.ratio > 0 and np.isfinite(s.ratio)]
    if not dbl:
        return CrossCheck(math.nan, False, "inconclusive: no double-peak structure", splits)
    for s in dbl:
        if s.ratio == 1.0:
            return CrossCheck(s.T, True, "equal weights at a sampled temperature", splits)
    for s0, s1 in zip(dbl, dbl[1:]):
        l0, l1 = math.log(s0.ratio), math.log(s1.ratio)
        if l0 * l1 < 0:
            return CrossCheck(_interp_root(s0.T, s1.T, l0, l1), True, "log-ratio crossing", splits)
    return CrossCheck(math.nan, False, "inconclusive: peak-weight ratio never crosses 1", splits)


@dataclass
class PeakEstimate:
    T_c: float
    reliable: bool
    message: str = ""


def specific_heat_peak(temperatures, c) -> PeakEstimate:
    """Peak of c(T) by a parabola through the maximum and its neighbours."""
    T = np.asarray(temperatures, dtype=float)
    c = np.asarray(c, dtype=float)
    if len(T) < 3:
        raise ValueError("need at least 3 temperatures")
    i = int(np.nanargmax(c))
    if i == 0 or i == len(T) - 1:
        return PeakEstimate(float(T[i]), False, "peak at ladder boundary")
    a, b, _ = np.polyfit(T[i - 1 : i + 2], c[i - 1 : i + 2], 2)
    if a >= 0:
        return PeakEstimate(float(T[i]), False, "no local curvature at the maximum")
    return PeakEstimate(float(-b / (2 * a)), True, "quadratic interpolation")


def specific_heat_curve(moments: list[ThermalMoments], temperatures, n_sites: int) -> np.ndarray:
    return np.array([specific_heat(m, 1.0 / T, n_sites) for m, T in zip(moments, temperatures)])


# -------------------------------------------------------------- threshold


@dataclass
class PhaseBoundary:
    points: list  # (p, T_c, error)
    p_c: float = math.nan
    p_c_error: float = math.nan
    found: bool = False
    message: str = ""

    def __post_init__(self):
        ps = [pt[0] for pt in self.points]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("phase boundary p values must be distinct and ascending")


def nishimori_line(p, J: float = 1.0):
    """T_N(p), continued to T_N(0) = 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    if np.any(pos):
        out[pos] = nishimori_temperature(p[pos], J)
    return float(out) if out.ndim == 0 else out


def _threshold(p, tc):
    d = tc - nishimori_line(p)
    for i, di in enumerate(d):
        if di == 0:
            return float(p[i])
    for i in range(len(p) - 1):
        if d[i] * d[i + 1] < 0:
            def f(x, i=i):
                t = tc[i] + (tc[i + 1] - tc[i]) * (x - p[i]) / (p[i + 1] - p[i])
                return t - nishimori_line(x)
            return float(brentq(f, p[i], p[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return None


def intersect_nishimori(boundary: PhaseBoundary, *, n_resample: int = 2000, seed: int = 0) -> PhaseBoundary:
    """Crossing of the piecewise-linear T_c(p) with the Nishimori line."""
    pts = np.array(boundary.points, dtype=float)
    if len(pts) < 2:
        raise ValueError("need at least 2 boundary points")
    if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] >= 0.5):
        raise ValueError("boundary p values must lie in [0, 1/2)")
    p, tc, err = pts[:, 0], pts[:, 1], np.nan_to_num(pts[:, 2], nan=0.0)
    root = _threshold(p, tc)
    if root is None:
        return PhaseBoundary(boundary.points, math.nan, math.nan, False, "threshold outside sampled range")
    if np.any(err > 0):
        rng = np.random.default_rng(seed)
        roots = []
        for _ in range(n_resample):
            r = _threshold(p, tc + err * rng.standard_normal(len(tc)))
            if r is not None:
                roots.append(r)
        error = float(np.std(roots)) if len(roots) > 1 else math.nan
    else:
        error = 0.0
    return PhaseBoundary(boundary.points, root, error, True, "crossing found")
