import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tricolor.analysis import (PhaseBoundary, SkewnessCurve, TransitionEstimate, extrapolate_tc, find_zero_crossing,
                               intersect_nishimori, maxwell_crosscheck, nishimori_line, peak_split,
                               skewness_curve, specific_heat_curve, specific_heat_peak)
from tricolor.model import nishimori_temperature
from tricolor.observables import ThermalMoments, WilsonHistogram


def curve(T, z, e=None, **meta):
    return SkewnessCurve(T, z, np.zeros(len(T)) if e is None else e, meta)


def hist_from_mass(mass):
    mass = np.asarray(mass, dtype=float)
    edges = np.linspace(-1, 1, len(mass) + 1)
    return WilsonHistogram(edges, mass, mass / mass.sum())


# --------------------------------------------------------------- crossing


def test_crossing_midpoint():
    est = find_zero_crossing(curve([1.0, 1.1], [0.5, -0.5]))
    assert est.detected and est.T_c == pytest.approx(1.05)
    assert est.bracket == (1.0, 1.1) and est.error == 0.0


def test_crossing_linear_interpolation():
    est = find_zero_crossing(curve([1.0, 1.2, 1.4, 1.6], [0.9, 0.3, -0.1, -0.6]))
    assert est.T_c == pytest.approx(1.35)


def test_no_crossing():
    est = find_zero_crossing(curve([1.0, 1.1, 1.2], [0.5, 0.4, 0.3]))
    assert not est.detected and math.isnan(est.T_c) and est.message == "no transition detected"


def test_minus_to_plus_is_not_a_crossing():
    assert not find_zero_crossing(curve([1.0, 1.1], [-0.5, 0.5])).detected


def test_lowest_significant_crossing_selected():
    T = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
    z = [0.02, -0.02, 0.5, 0.4, -0.4, -0.5]
    e = [0.05, 0.05, 0.05, 0.05, 0.05, 0.05]
    est = find_zero_crossing(curve(T, z, e))
    assert est.bracket == (1.3, 1.4) and est.n_crossings == 2 and est.n_significant == 1
    assert est.message == "lowest significant crossing"


def test_insignificant_crossings_use_reference():
    T = [1.0, 1.1, 1.2, 1.3, 1.4]
    z = [0.01, -0.01, 0.01, -0.01, -0.02]
    est = find_zero_crossing(curve(T, z, [0.1] * 5), near=1.26)
    assert est.bracket == (1.2, 1.3)
    assert find_zero_crossing(curve(T, z, [0.1] * 5)).bracket == (1.0, 1.1)


def test_crossing_error_from_resampling():
    est = find_zero_crossing(curve([1.0, 1.1], [0.5, -0.5], [0.1, 0.1]), seed=3)
    assert 0 < est.error < 0.05
    assert est == find_zero_crossing(curve([1.0, 1.1], [0.5, -0.5], [0.1, 0.1]), seed=3)


@given(st.floats(0.1, 10), st.floats(0.1, 2), st.floats(-0.5, 0.5))
def test_crossing_rescaling_invariance(a, t_scale, t_shift):
    T = np.array([1.0, 1.2, 1.4, 1.6, 1.8])
    z = np.array([0.8, 0.4, 0.1, -0.3, -0.7])
    ref = find_zero_crossing(curve(T, z)).T_c
    assert find_zero_crossing(curve(T, a * z)).T_c == pytest.approx(ref, rel=1e-12)
    moved = find_zero_crossing(curve(T * t_scale + t_shift, z)).T_c
    assert moved == pytest.approx(ref * t_scale + t_shift, rel=1e-12, abs=1e-12)


def test_curve_validation():
    with pytest.raises(ValueError):
        SkewnessCurve([1.0, 1.0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        SkewnessCurve([1.0, 2.0], [0], [0, 0])


def test_skewness_curve_symmetric_zero():
    m = ThermalMoments.from_series([np.array([-0.3, 0.3] * 10)] * 4)
    c = skewness_curve([1.0, 2.0], [m, m], n_boot=50)
    assert np.all(c.zeta == 0.0) and c.meta["convention"] == "ordered"


# ----------------------------------------------------------- extrapolation


def test_extrapolation_exact_affine():
    Ns = [648, 1944, 4608]
    ests = [TransitionEstimate(1.5 + 20.0 / N, 0.01, N) for N in Ns]
    ex = extrapolate_tc(ests)
    assert ex.T_c == pytest.approx(1.5, abs=1e-12) and ex.slope == pytest.approx(20.0)
    assert ex.chi2 == pytest.approx(0, abs=1e-18) and ex.n_points == 3


def test_extrapolation_unweighted_two_points():
    ests = [TransitionEstimate(1.6, math.nan, 100), TransitionEstimate(1.55, math.nan, 200)]
    ex = extrapolate_tc(ests)
    assert ex.T_c == pytest.approx(1.5) and math.isnan(ex.error)


def test_extrapolation_needs_two_sizes():
    with pytest.raises(ValueError):
        extrapolate_tc([TransitionEstimate(1.5, 0.1, 648)])
    with pytest.raises(ValueError):
        extrapolate_tc([TransitionEstimate(1.5, 0.1, 648), TransitionEstimate(1.4, 0.1, 648)])
    with pytest.raises(ValueError):
        extrapolate_tc([TransitionEstimate(1.5, 0.1, 648), TransitionEstimate(math.nan, math.nan, 1944, False)])


# ---------------------------------------------------------------- Maxwell


def test_peak_split_symmetric():
    s = peak_split(hist_from_mass([1, 4, 1, 0.5, 1, 4, 1]), T=1.0)
    assert s.double and s.ratio == pytest.approx(1.0) and s.split == pytest.approx(0.0)


def test_peak_split_single_peak():
    assert not peak_split(hist_from_mass([1, 2, 5, 2, 1])).double


def test_peak_split_ignores_small_wiggle():
    assert not peak_split(hist_from_mass([1, 5, 2, 1.0, 1.01, 1.0])).double


def test_maxwell_crossing():
    hs = [(1.0, hist_from_mass([1, 2, 1, 0.2, 2, 8, 2])), (1.2, hist_from_mass([2, 8, 2, 0.2, 1, 2, 1]))]
    cc = maxwell_crosscheck(hs)
    assert cc.conclusive and cc.T_c == pytest.approx(1.1)


def test_maxwell_equal_at_sample():
    cc = maxwell_crosscheck([(1.3, hist_from_mass([1, 4, 1, 0.5, 1, 4, 1]))])
    assert cc.conclusive and cc.T_c == 1.3


def test_maxwell_inconclusive():
    assert not maxwell_crosscheck([(1.0, hist_from_mass([1, 2, 5, 2, 1]))]).conclusive
    hs = [(1.0, hist_from_mass([1, 2, 1, 0.2, 2, 8, 2])), (1.2, hist_from_mass([1, 2, 1, 0.2, 2, 6, 2]))]
    cc = maxwell_crosscheck(hs)
    assert not cc.conclusive and "never crosses" in cc.message


# ---------------------------------------------------------- specific heat


def test_specific_heat_peak_parabola():
    T = np.linspace(1.0, 2.0, 11)
    est = specific_heat_peak(T, 3.0 - (T - 1.4) ** 2)
    assert est.reliable and est.T_c == pytest.approx(1.4)


def test_specific_heat_peak_boundary():
    T = np.linspace(1.0, 2.0, 11)
    est = specific_heat_peak(T, T)
    assert not est.reliable and est.T_c == 2.0


def test_specific_heat_curve():
    m = ThermalMoments.from_series([np.zeros(2)], [np.array([-1.0, 1.0])])
    assert np.allclose(specific_heat_curve([m, m], [1.0, 2.0], 4), [0.25, 0.0625])


# -------------------------------------------------------------- threshold


def test_nishimori_line_zero_at_origin():
    assert nishimori_line(0.0) == 0.0
    assert np.allclose(nishimori_line([0.0, 0.1]), [0.0, nishimori_temperature(0.1)])


def test_threshold_exact():
    p_star = 0.05
    t_star = nishimori_temperature(p_star)
    # two straight boundary points through (p_star, T_N(p_star))
    pts = [(0.0, t_star + 0.5, 0.0), (0.1, t_star - 0.5, 0.0)]
    lin = lambda p: t_star + 0.5 - 10.0 * p  # noqa: E731
    res = intersect_nishimori(PhaseBoundary(pts))
    assert res.found and res.p_c_error == 0.0
    assert abs(lin(res.p_c) - nishimori_line(res.p_c)) < 1e-12


def test_threshold_on_sampled_point():
    p1 = 0.04
    pts = [(0.02, 2.0, 0.0), (p1, nishimori_temperature(p1), 0.0), (0.06, 0.1, 0.0)]
    assert intersect_nishimori(PhaseBoundary(pts)).p_c == p1


def test_threshold_outside_range():
    res = intersect_nishimori(PhaseBoundary([(0.0, 1.6, 0.01), (0.02, 1.5, 0.01)]))
    assert not res.found and math.isnan(res.p_c) and "outside" in res.message


def test_threshold_error_from_resampling():
    pts = [(0.0, 1.6, 0.02), (0.06, 0.4, 0.02)]
    a = intersect_nishimori(PhaseBoundary(pts), n_resample=500, seed=1)
    assert a.found and 0 < a.p_c_error < 0.01
    assert a.p_c_error == intersect_nishimori(PhaseBoundary(pts), n_resample=500, seed=1).p_c_error


def test_boundary_validation():
    with pytest.raises(ValueError):
        PhaseBoundary([(0.02, 1.0, 0.0), (0.01, 1.2, 0.0)])
    with pytest.raises(ValueError):
        intersect_nishimori(PhaseBoundary([(0.02, 1.0, 0.0)]))
    with pytest.raises(ValueError):
        intersect_nishimori(PhaseBoundary([(0.2, 1.0, 0.0), (0.6, 0.5, 0.0)]))
