import numpy as np
import pytest
from hypothesis import given, strategies as st

from shapestat.core import build_ecdf
from shapestat.unimodal import (BirgeConfig, StepDensity, birge_candidate_modes, birge_distances,
                                birge_fit, data_point_mode_distances, grenander_mode_known,
                                grenander_monotone, ks_distance, pava_antitonic)

from oracles import antitonic_exhaustive, lcm_slopes

vectors = st.lists(st.floats(-10, 10), min_size=1, max_size=7)
pos_samples = st.lists(st.integers(1, 60).map(lambda k: k / 4.0), min_size=2, max_size=40)


def _ks_oracle(fit, x):
    e = build_ecdf(x)
    f = np.asarray(fit.cdf(e.support_points))
    left = np.concatenate([[0.0], e.cum_probs[:-1]])
    return max(np.max(np.abs(f - e.cum_probs)), np.max(np.abs(f - left)))


# -- PAVA


def test_pava_examples():
    np.testing.assert_allclose(pava_antitonic([1, 3, 2]), [2, 2, 2])
    np.testing.assert_allclose(pava_antitonic([3, 2, 1]), [3, 2, 1])
    np.testing.assert_allclose(pava_antitonic([3, 1, 2]), [3, 1.5, 1.5])
    np.testing.assert_allclose(pava_antitonic([1, 3, 2]), antitonic_exhaustive([1, 3, 2]))
    np.testing.assert_allclose(pava_antitonic([3, 1, 2]), antitonic_exhaustive([3, 1, 2]))


def test_pava_rejects_bad_weights():
    with pytest.raises(ValueError):
        pava_antitonic([1, 2], [1, 0])
    with pytest.raises(ValueError):
        pava_antitonic([1, 2], [1])


@given(vectors, st.data())
def test_pava_matches_exhaustive_oracle(values, data):
    w = data.draw(st.lists(st.floats(0.1, 5), min_size=len(values), max_size=len(values)))
    fit = pava_antitonic(values, w)
    np.testing.assert_allclose(fit, antitonic_exhaustive(values, w), atol=1e-9)


@given(vectors)
def test_pava_invariants(values):
    fit = pava_antitonic(values)
    assert np.all(np.diff(fit) <= 1e-12)
    np.testing.assert_allclose(pava_antitonic(fit), fit, atol=1e-12)
    # each pooled block keeps its mean
    v = np.asarray(values)
    starts = np.flatnonzero(np.concatenate([[True], np.diff(fit) != 0]))
    ends = np.concatenate([starts[1:], [v.size]])
    for a, b in zip(starts, ends):
        assert np.mean(v[a:b]) == pytest.approx(fit[a], abs=1e-9)


# -- monotone Grenander


def test_grenander_examples():
    f = grenander_monotone([1, 2, 4], "decreasing", 0.0)
    np.testing.assert_allclose(f.breakpoints, [0, 2, 4])
    np.testing.assert_allclose(f.heights, [1 / 3, 1 / 6])
    g = grenander_monotone([3.0], "decreasing", 2.0)
    np.testing.assert_allclose(g.heights, [1.0])
    assert g.support == (2.0, 3.0)
    with pytest.raises(ValueError):
        grenander_monotone([1, 2], "decreasing", 1.5)
    with pytest.raises(ValueError):
        grenander_monotone([1, 2], "increasing", 1.5)
    with pytest.raises(ValueError):
        grenander_monotone([1, 2], "sideways", 0.0)


def test_grenander_matches_lcm_oracle_random():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 80))
        x = np.round(rng.exponential(size=n), 2) + 0.01
        pts, counts = np.unique(x, return_counts=True)
        f = grenander_monotone(x, "decreasing", 0.0)
        h = f.pdf(pts)
        np.testing.assert_allclose(h, lcm_slopes(pts, counts, 0.0), rtol=1e-12, atol=1e-12)


def test_increasing_grenander_is_mirror_image():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, 30)
    inc = grenander_monotone(x, "increasing", 1.0)
    dec = grenander_monotone(1.0 - x, "decreasing", 0.0)
    np.testing.assert_allclose(inc.breakpoints, 1.0 - dec.breakpoints[::-1], atol=1e-15)
    np.testing.assert_allclose(inc.heights, dec.heights[::-1], rtol=1e-12)
    assert np.all(np.diff(inc.heights) >= 0)


@given(pos_samples)
def test_grenander_normalized_and_monotone(x):
    f = grenander_monotone(x, "decreasing", 0.0)
    assert f.total_mass() == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(f.heights) < 0)


# -- mode-known fit


def test_mode_known_examples():
    f = grenander_mode_known([-1, 1], 0.0)
    np.testing.assert_allclose(f.breakpoints, [-1, 1])
    np.testing.assert_allclose(f.heights, [0.5])
    a = grenander_mode_known([1, 2, 4], 0.5)
    b = grenander_monotone([1, 2, 4], "decreasing", 0.5)
    np.testing.assert_allclose(a.breakpoints, b.breakpoints)
    np.testing.assert_allclose(a.heights, b.heights)
    c = grenander_mode_known([1, 2, 4], 5.0)
    np.testing.assert_allclose(c.heights, grenander_monotone([1, 2, 4], "increasing", 5.0).heights)
    with pytest.raises(ValueError):
        grenander_mode_known([1, 2, 4], 2.0)


@given(pos_samples, st.floats(0.0, 16.0))
def test_mode_known_unimodal_at_mode(x, mode):
    if mode in x:
        mode += 1e-3
    f = grenander_mode_known(x, mode)
    assert f.total_mass() == pytest.approx(1.0, abs=1e-10)
    k = np.searchsorted(f.breakpoints, mode)
    assert np.all(np.diff(f.heights[:k]) >= -1e-12)
    assert np.all(np.diff(f.heights[k:]) <= 1e-12)
    assert f.mode_location == mode
    assert f.cdf(mode) == pytest.approx(np.mean(np.asarray(x) <= mode), abs=1e-12)


@given(pos_samples, st.floats(0.0, 16.0))
def test_mode_known_sides_match_oracle(x, mode):
    if mode in x:
        mode += 1e-3
    v = np.asarray(x)
    f = grenander_mode_known(v, mode)
    right = v[v > mode]
    if right.size:
        pts, counts = np.unique(right, return_counts=True)
        ref = (right.size / v.size) * lcm_slopes(pts, counts, mode)
        np.testing.assert_allclose(f.pdf(pts), ref, rtol=1e-11, atol=1e-12)
    left = v[v <= mode]
    if left.size:
        pts, counts = np.unique(mode - left, return_counts=True)
        ref = (left.size / v.size) * lcm_slopes(pts, counts, 0.0)
        # reflected piece (0, d] maps to [mode - d, mode)
        np.testing.assert_allclose(f.pdf(mode - pts + 1e-12), ref, rtol=1e-11, atol=1e-12)


# -- Birgé


def test_birge_example_symmetric_pair():
    f = birge_fit([-1, 1], BirgeConfig(0.5))
    np.testing.assert_allclose(f.breakpoints, [-1, 1])
    np.testing.assert_allclose(f.heights, [0.5])


def test_birge_decreasing_looking_sample():
    x = [0.1, 0.2, 0.4, 0.9]
    modes, d = birge_distances(x)
    # exhaustive oracle over the candidate modes, smallest mode on ties
    direct = np.array([_ks_oracle(grenander_mode_known(x, m), x) for m in modes])
    np.testing.assert_allclose(d, direct, atol=1e-12)
    f = birge_fit(x, BirgeConfig(1e-9))
    best = int(np.argmin(direct))
    assert f.mode_location == pytest.approx(modes[best])
    ref = grenander_mode_known(x, modes[best])
    np.testing.assert_allclose(f.heights, ref.heights)
    if f.mode_location <= min(x):
        g = grenander_monotone(x, "decreasing", f.mode_location)
        np.testing.assert_allclose(f.heights, g.heights)


def test_birge_distances_match_direct_fits():
    rng = np.random.default_rng(5)
    for _ in range(40):
        x = np.round(rng.gamma(2.0, 1.0, int(rng.integers(2, 50))), 1)
        if np.unique(x).size < 2:
            continue
        modes, d = birge_distances(x)
        direct = [ks_distance(grenander_mode_known(x, m), x) for m in modes]
        np.testing.assert_allclose(d, direct, atol=1e-12)
        np.testing.assert_array_equal(modes, birge_candidate_modes(x))


def test_data_point_limits():
    rng = np.random.default_rng(6)
    x = np.round(rng.normal(size=25), 2)
    pts, d = data_point_mode_distances(x)
    span = pts[-1] - pts[0]
    for p, dp in zip(pts, d):
        near = ks_distance(grenander_mode_known(x, p + 1e-10 * span), x)
        assert abs(near - dp) <= 1e-6


@given(st.lists(st.integers(0, 30).map(lambda k: k / 3.0), min_size=2, max_size=40),
       st.floats(1e-6, 0.3))
def test_birge_eta_guarantee(x, eta):
    if len(set(x)) < 2:
        return
    _, mid = birge_distances(x)
    _, at = data_point_mode_distances(x)
    f = birge_fit(x, BirgeConfig(eta))
    assert ks_distance(f, x) <= min(mid.min(), at.min()) + eta + 1e-12
    assert f.total_mass() == pytest.approx(1.0, abs=1e-10)


def test_birge_direction_property():
    # fitted cdf below the ecdf left of the mode, above it to the right
    rng = np.random.default_rng(8)
    x = rng.gamma(3.0, 1.0, 60)
    f = birge_fit(x)
    e = build_ecdf(x)
    pts = e.support_points
    Fh = f.cdf(pts)
    left = pts < f.mode_location
    assert np.all(Fh[left] <= e.cum_probs[left] + 1e-12)
    right = pts > f.mode_location
    assert np.all(Fh[right] >= e.left_limit(pts[right]) - 1e-12)


def test_birge_rejects_single_value_and_bad_eta():
    with pytest.raises(ValueError):
        birge_fit([1.0, 1.0])
    with pytest.raises(ValueError):
        BirgeConfig(0.0)


def test_step_density_contract():
    f = StepDensity(np.array([0.0, 1.0, 3.0]), np.array([0.5, 0.25]), 1.0)
    assert f.pdf(0.0) == 0.0 and f.pdf(1.0) == 0.5 and f.pdf(1.5) == 0.25
    assert f.cdf(2.0) == pytest.approx(0.75)
    assert f.mean() == pytest.approx(0.5 * 0.5 + 0.25 * (9 - 1) / 2)
    assert f.square_integral() == pytest.approx(0.25 + 0.125)
    with pytest.raises(ValueError):
        StepDensity(np.array([0.0, 0.0]), np.array([1.0]), 0.0)
