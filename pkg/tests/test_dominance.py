import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from shapestat.core import pooled_ecdf, trim_interval
from shapestat.dominance import (FAMILIES, _decide, c_mn, critical_value, fit_handle, run_dominance_test,
                                 sigma_tsep, stat_min_t, stat_tsep, stat_wrs)

from oracles import min_t_bruteforce, tsep_grid, wrs_ranks

pytestmark = pytest.mark.filterwarnings("ignore:pooled sample is degenerate")

small = st.lists(st.integers(0, 25).map(float), min_size=2, max_size=30)


def _handles(x, y, family="empirical"):
    return fit_handle(x, family), fit_handle(y, family)


def _D(x, y, p):
    return trim_interval(pooled_ecdf(x, y), p)


# -- min-t


def test_min_t_identical_samples():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert stat_min_t(*_handles(x, x), _D(x, x, 0.2)) == 0.0


def test_min_t_separated_samples():
    x, y = [1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]
    assert stat_min_t(*_handles(x, y), _D(x, y, 0.25)) == -math.inf
    assert min_t_bruteforce(x, y, *_bounds(x, y, 0.25)) == -math.inf


def _bounds(x, y, p):
    D = _D(x, y, p)
    return D.lower, D.upper


@given(small, small, st.floats(0.02, 0.45))
def test_min_t_matches_bruteforce(x, y, p):
    D = _D(x, y, p)
    val = stat_min_t(*_handles(x, y), D)
    ref = min_t_bruteforce(x, y, D.lower, D.upper)
    if math.isinf(ref):
        assert val == ref
    else:
        assert val == pytest.approx(ref, abs=1e-12)


def test_min_t_continuous_against_dense_grid():
    rng = np.random.default_rng(1)
    x, y = rng.normal(0.3, 1, 60), rng.normal(0, 1, 60)
    F1, F2 = _handles(x, y, "logconcave")
    D = _D(x, y, 0.05)
    val = stat_min_t(F1, F2, D)
    t = np.linspace(D.lower, D.upper, 200_001)
    a, b = F1.cdf(t), F2.cdf(t)
    ref = np.min((b - a) / np.sqrt(a * (1 - a) / 60 + b * (1 - b) / 60))
    assert val <= ref + 1e-9
    assert val >= ref - 1e-6


@given(small, small)
def test_min_t_monotone_transform_invariance(x, y):
    D1 = _D(x, y, 0.1)
    tx, ty = np.exp(np.asarray(x) / 5), np.exp(np.asarray(y) / 5)
    D2 = _D(tx, ty, 0.1)
    a = stat_min_t(*_handles(x, y), D1)
    b = stat_min_t(*_handles(tx, ty), D2)
    assert a == pytest.approx(b, abs=1e-12) or a == b
    assert stat_tsep(*_handles(x, y), pooled_ecdf(x, y), 0.1) == pytest.approx(
        stat_tsep(*_handles(tx, ty), pooled_ecdf(tx, ty), 0.1), abs=1e-12)
    assert stat_wrs(*_handles(x, y)) == pytest.approx(stat_wrs(*_handles(tx, ty)), abs=1e-12)


@given(small, small)
def test_min_t_exchange_antisymmetry(x, y):
    # with m = n the numerator flips sign and the variance is symmetric
    n = min(len(x), len(y))
    x, y = x[:n], y[:n]
    D = _D(x, y, 0.1)
    pts = np.union1d(x, y)
    pts = pts[(pts >= D.lower) & (pts <= D.upper)]
    a = stat_min_t(*_handles(x, y), D)
    b = stat_min_t(*_handles(y, x), D)
    F1, F2 = _handles(x, y)
    r = (F2.cdf(pts) - F1.cdf(pts))
    den = np.sqrt(F1.cdf(pts) * (1 - F1.cdf(pts)) / n + F2.cdf(pts) * (1 - F2.cdf(pts)) / n)
    live = den > 0
    if live.all() and live.size:
        assert a == pytest.approx(np.min(r / den), abs=1e-12)
        assert b == pytest.approx(-np.max(r / den), abs=1e-12)


# -- TSEP


def test_tsep_identical():
    x = [1.0, 2.0, 3.0, 4.0]
    assert stat_tsep(*_handles(x, x), pooled_ecdf(x, x), 0.1) == 0.0


@given(small, small, st.floats(0.02, 0.45))
def test_tsep_matches_grid_oracle(x, y, p):
    val = stat_tsep(*_handles(x, y), pooled_ecdf(x, y), p)
    assert val == pytest.approx(tsep_grid(x, y, p), abs=1e-9)


@given(small, small, st.floats(0.02, 0.45))
def test_tsep_below_pooled_point_bound(x, y, p):
    m, n = len(x), len(y)
    H = pooled_ecdf(x, y)
    F1, F2 = _handles(x, y)
    pts = H.support_points
    z = H(pts)
    keep = (z >= p) & (z <= 1 - p)
    if not keep.any():
        return
    bound = math.sqrt(m * n / (m + n)) * np.min(
        (F2.cdf(pts[keep]) - F1.cdf(pts[keep])) / np.sqrt(z[keep] * (1 - z[keep])))
    assert stat_tsep(F1, F2, H, p) <= bound + 1e-12


def test_tsep_random_continuous_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        x, y = rng.normal(size=40), rng.normal(0.5, 1.2, size=55)
        assert stat_tsep(*_handles(x, y), pooled_ecdf(x, y), 0.05) == pytest.approx(
            tsep_grid(x, y, 0.05), abs=1e-9)


# -- WRS


def test_wrs_examples():
    x = [1.0, 2.0, 3.0]
    assert stat_wrs(*_handles(x, x)) == 0.0
    val = stat_wrs(*_handles([3.0, 4.0], [1.0, 2.0]))
    assert val == pytest.approx(math.sqrt(12 * 4 / 5) * 0.5)
    assert val == pytest.approx(1.549, abs=1e-3)


@given(small, small)
def test_wrs_matches_rank_oracle(x, y):
    assert stat_wrs(*_handles(x, y)) == pytest.approx(wrs_ranks(x, y), abs=1e-12)


def test_wrs_fitted_against_quadrature():
    rng = np.random.default_rng(6)
    x, y = rng.normal(0.5, 1, 80), rng.normal(0, 1, 90)
    F1, F2 = _handles(x, y, "logconcave")
    from oracles import quad
    theta = quad(lambda t: F2.cdf(t) * F1.pdf(t), *F1.support, points=list(F1.breakpoints))
    ref = math.sqrt(12 * 80 * 90 / 171) * (theta - 0.5)
    assert stat_wrs(F1, F2) == pytest.approx(ref, abs=1e-6)


# -- decisions


def test_critical_values():
    z = critical_value(0.05, 50, 50)
    assert z == pytest.approx(1.6448536269514722, abs=1e-12)
    assert critical_value(0.05, 50, 50, conservative=True) == pytest.approx(math.sqrt(2) * z)
    assert c_mn(68, 180) == pytest.approx(math.sqrt(248 / 68))
    with pytest.raises(ValueError):
        critical_value(1.0, 5, 5)


def test_sigma_tsep_examples():
    assert sigma_tsep(1.3, 1.3, 0.3) == pytest.approx(1.0, abs=1e-15)
    assert sigma_tsep(2.0, 1.0, 0.5) == pytest.approx(2.5 / 2.25)
    with pytest.raises(ValueError):
        sigma_tsep(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        sigma_tsep(1.0, 1.0, 1.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.01, 0.99))
def test_sigma_tsep_bounds(f, g, lam):
    v = sigma_tsep(f, g, lam)
    bound = max(1 / lam, 1 / (1 - lam))
    assert v <= bound * (1 + 1e-12)
    if f != g:
        assert v >= 1.0 - 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_run_identical_samples_never_reject(family):
    x = np.random.default_rng(7).normal(size=40)
    for stat in ("min-t", "tsep", "wrs"):
        res = run_dominance_test(x, x, family, stat, p=0.1, alpha=0.3)
        assert not res.reject
        assert abs(res.value) <= 1e-6
        assert res.p_value == pytest.approx(0.5, abs=1e-5)


def test_run_result_fields_and_flags():
    rng = np.random.default_rng(8)
    x, y = rng.normal(1.0, 1, 100), rng.normal(0, 1, 100)
    res = run_dominance_test(x, y, "empirical", "tsep", p=0.05, alpha=0.05, conservative=True)
    assert res.critical_value == pytest.approx(math.sqrt(2) * critical_value(0.05, 100, 100))
    assert res.reject == (res.value > res.critical_value)
    assert (res.p_value < 0.05) == res.reject
    d = res.to_dict()
    assert d["interval"] == [res.interval.lower, res.interval.upper]
    assert d["p_value_reference"] == "N(0, c_mn^2)"
    w = run_dominance_test(x, y, "logconcave", "wrs")
    assert any("asymptotics unknown" in n for n in w.notes)
    with pytest.raises(ValueError):
        run_dominance_test(x, y, "empirical", "min-t", conservative=True)
    with pytest.raises(ValueError):
        run_dominance_test(x, y, "histogram", "min-t")


def test_infinite_values_give_extreme_p_values():
    res = run_dominance_test([1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0], "empirical", "min-t",
                             p=0.25)
    assert res.value == -math.inf and res.p_value == 1.0 and not res.reject
    D = trim_interval(pooled_ecdf([1.0], [2.0]), 0.25)
    res = _decide("min-t", math.inf, 4, 4, 0.05, False, D, "empirical", ())
    assert res.p_value == 0.0 and res.reject


def test_shape_constrained_agree_with_empirical_at_large_n():
    rng = np.random.default_rng(9)
    x, y = rng.normal(0.2, 1, 2000), rng.normal(0, 1, 2000)
    for stat in ("min-t", "tsep", "wrs"):
        e = run_dominance_test(x, y, "empirical", stat).value
        for fam in ("logconcave", "logconcave-smoothed"):
            v = run_dominance_test(x, y, fam, stat).value
            # statistics are sqrt(N)-scaled; compare on the unscaled gap
            assert abs(v - e) / math.sqrt(2000) <= 0.15
