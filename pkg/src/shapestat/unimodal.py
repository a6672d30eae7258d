"""Grenander-type step density estimators.

Monotone fits are slopes of the least concave majorant of the ECDF, computed
as a weighted antitonic regression of the raw histogram heights over the
gaps between consecutive distinct observations.  A unimodal fit with a known
mode glues an increasing fit on the left of the mode to a decreasing fit on
the right, weighted by the sample proportions on each side.  Birgé's
estimator picks the mode by minimizing the Kolmogorov distance between the
fitted CDF and the ECDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import Sample, as_sample, build_ecdf

__all__ = [
    "StepDensity",
    "BirgeConfig",
    "pava_antitonic",
    "grenander_monotone",
    "grenander_mode_known",
    "birge_fit",
    "birge_candidate_modes",
    "birge_distances",
    "data_point_mode_distances",
    "ks_distance",
]


@dataclass(frozen=True)
class StepDensity:
    """Piecewise-constant density; ``heights[i]`` applies on
    ``(breakpoints[i], breakpoints[i + 1]]``."""

    breakpoints: np.ndarray
    heights: np.ndarray
    mode_location: float

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if b.ndim != 1 or h.shape != (b.size - 1,):
            raise ValueError("need len(breakpoints) == len(heights) + 1")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(h < 0):
            raise ValueError("heights must be nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "heights", h)
        cum = np.concatenate([[0.0], np.cumsum(h * np.diff(b))])
        object.__setattr__(self, "_cum", cum)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def total_mass(self) -> float:
        return float(self._cum[-1])

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="left")
        inside = (idx >= 1) & (idx <= self.heights.size)
        out = np.where(inside, self.heights[np.clip(idx - 1, 0, self.heights.size - 1)], 0.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        out = np.interp(x, self.breakpoints, self._cum, left=0.0, right=self._cum[-1])
        return out if np.ndim(out) else float(out)

    def mean(self) -> float:
        b = self.breakpoints
        return float(np.sum(self.heights * (b[1:] ** 2 - b[:-1] ** 2)) / 2.0)

    def log_linear_pieces(self):
        """(left, right, log value at left, log slope) per piece."""
        with np.errstate(divide="ignore"):
            logh = np.log(self.heights)
        return self.breakpoints[:-1], self.breakpoints[1:], logh, np.zeros_like(logh)

    def square_integral(self) -> float:
        return float(np.sum(self.heights ** 2 * np.diff(self.breakpoints)))


@dataclass(frozen=True)
class BirgeConfig:
    eta: float

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be a positive finite number, got {self.eta}")


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True)
def _pava_dec(y, w):
    n = y.size
    means = np.empty(n)
    weights = np.empty(n)
    sizes = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        means[top] = y[i]
        weights[top] = w[i]
        sizes[top] = 1
        top += 1
        while top > 1 and means[top - 2] < means[top - 1]:
            wt = weights[top - 2] + weights[top - 1]
            means[top - 2] = (weights[top - 2] * means[top - 2]
                              + weights[top - 1] * means[top - 1]) / wt
            weights[top - 2] = wt
            sizes[top - 2] += sizes[top - 1]
            top -= 1
    out = np.empty(n)
    k = 0
    for b in range(top):
        for _ in range(sizes[b]):
            out[k] = means[b]
            k += 1
    return out


@numba.njit(cache=True)
def _decreasing_slopes(points, counts, anchor, total):
    # points strictly increasing and > anchor
    k = points.size
    gaps = np.empty(k)
    raw = np.empty(k)
    prev = anchor
    for i in range(k):
        gaps[i] = points[i] - prev
        raw[i] = counts[i] / (total * gaps[i])
        prev = points[i]
    return _pava_dec(raw, gaps), gaps


@numba.njit(cache=True)
def _decreasing_masses(points, counts, anchor, total):
    """Mass of the decreasing Grenander fit on each gap ``(prev, point]``.

    A zero first gap (``points[0] == anchor``) is read as the limit of an
    anchor just below the first point: that gap keeps the point's own
    empirical mass.
    """
    k = points.size
    masses = np.empty(k)
    if k == 0:
        return masses
    start = 0
    if points[0] - anchor <= 0.0:
        masses[0] = counts[0] / total
        start = 1
    if start < k:
        slopes, gaps = _decreasing_slopes(points[start:], counts[start:],
                                          points[start - 1] if start == 1 else anchor, total)
        for i in range(k - start):
            masses[start + i] = slopes[i] * gaps[i]
    return masses


@numba.njit(cache=True)
def _mode_known_cdf(u, c, n, s, mode):
    """CDF of the mode-known fit at the distinct points ``u``.

    The first ``s`` points lie on the increasing side (``u[s-1] <= mode``),
    the rest on the decreasing side (``u[s] > mode``).
    """
    k = u.size
    out = np.empty(k)
    nl = 0.0
    for j in range(s):
        nl += c[j]
    alpha = nl / n
    if s > 0:
        refl = np.empty(s)
        rc = np.empty(s)
        for i in range(s):
            refl[i] = mode - u[s - 1 - i]
            rc[i] = c[s - 1 - i]
        ml = _decreasing_masses(refl, rc, 0.0, nl)
        # reflected gap i lies to the right of u[s-1-i]
        acc = 0.0
        for i in range(s):
            acc += ml[i]
            out[s - 1 - i] = alpha * max(1.0 - acc, 0.0)
    if s < k:
        mr = _decreasing_masses(u[s:].copy(), c[s:].copy(), mode, n - nl)
        acc = 0.0
        for i in range(k - s):
            acc += mr[i]
            out[s + i] = alpha + (1.0 - alpha) * min(acc, 1.0)
    return out


@numba.njit(cache=True)
def _ks_at_points(fitted, c, n):
    d = 0.0
    acc = 0.0
    for j in range(fitted.size):
        left = acc / n
        acc += c[j]
        right = acc / n
        a = abs(fitted[j] - right)
        b = abs(fitted[j] - left)
        if a > d:
            d = a
        if b > d:
            d = b
    return d


@numba.njit(cache=True)
def _birge_scan(u, c, n):
    """Kolmogorov distances for gap-midpoint modes and for data-point modes.

    A data-point mode ``u[k]`` puts ``u[k]`` on the increasing side and is
    evaluated as the limit of modes just above it.
    """
    k = u.size
    mid = np.empty(k - 1)
    pts = np.empty(k)
    for m in range(k - 1):
        fitted = _mode_known_cdf(u, c, n, m + 1, 0.5 * (u[m] + u[m + 1]))
        mid[m] = _ks_at_points(fitted, c, n)
    for m in range(k):
        fitted = _mode_known_cdf(u, c, n, m + 1, u[m])
        pts[m] = _ks_at_points(fitted, c, n)
    return mid, pts


# ---------------------------------------------------------------------------
# public API


def pava_antitonic(values, weights=None) -> np.ndarray:
    """Weighted least-squares nonincreasing fit by pooling adjacent violators."""
    y = np.asarray(values, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one value")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != y.shape:
        raise ValueError("values and weights must have equal length")
    if np.any(~(w > 0)):
        raise ValueError("weights must be strictly positive")
    return _pava_dec(y, w)


def _merge_equal(breaks: np.ndarray, heights: np.ndarray):
    keep = np.ones(heights.size, dtype=bool)
    keep[:-1] = heights[:-1] != heights[1:]
    return np.concatenate([breaks[:1], breaks[1:][keep]]), heights[keep]


def grenander_monotone(sample, direction: str, anchor: float) -> StepDensity:
    """Grenander estimator of a monotone density with one known support end.

    ``direction="decreasing"``: the density lives on ``(anchor, max]`` and
    ``anchor`` must lie strictly below every observation.
    ``direction="increasing"``: the density lives on ``[min, anchor)``.
    """
    s = as_sample(sample)
    pts, counts = s.distinct()
    anchor = float(anchor)
    if direction == "decreasing":
        if not anchor < pts[0]:
            raise ValueError("decreasing fit needs an anchor strictly below the data")
        slopes, _ = _decreasing_slopes(pts, counts.astype(float), anchor, float(s.size))
        b, h = _merge_equal(np.concatenate([[anchor], pts]), slopes)
        return StepDensity(b, h, anchor)
    if direction == "increasing":
        if not anchor > pts[-1]:
            raise ValueError("increasing fit needs an anchor strictly above the data")
        refl = anchor - pts[::-1]
        slopes, _ = _decreasing_slopes(refl, counts[::-1].astype(float), 0.0, float(s.size))
        b, h = _merge_equal(np.concatenate([[0.0], refl]), slopes)
        return StepDensity(anchor - b[::-1], h[::-1], anchor)
    raise ValueError(f"direction must be 'increasing' or 'decreasing', got {direction!r}")


def grenander_mode_known(sample, mode: float) -> StepDensity:
    """Unimodal MLE with the mode fixed at ``mode``.

    Observations ``<= mode`` feed the increasing piece and receive total mass
    equal to their sample proportion.  The likelihood is unbounded when an
    observation sits exactly at the mode, so that case is rejected.
    """
    s = as_sample(sample)
    mode = float(mode)
    v = s.values
    left, right = v[v <= mode], v[v > mode]
    if left.size and left[-1] == mode:
        raise ValueError("an observation coincides with the mode; the mode-known MLE is unbounded")
    alpha = left.size / s.size
    if not left.size:
        return grenander_monotone(right, "decreasing", mode)
    if not right.size:
        return grenander_monotone(left, "increasing", mode)
    lf = grenander_monotone(left, "increasing", mode)
    rf = grenander_monotone(right, "decreasing", mode)
    breaks = np.concatenate([lf.breakpoints, rf.breakpoints[1:]])
    heights = np.concatenate([alpha * lf.heights, (1.0 - alpha) * rf.heights])
    b, h = _merge_equal(breaks, heights)
    return StepDensity(b, h, mode)


def ks_distance(fit: StepDensity, sample) -> float:
    """sup |F_fit - F_m|, attained at observations (both one-sided limits)."""
    e = build_ecdf(sample)
    fx = fit.cdf(e.support_points)
    left = np.concatenate([[0.0], e.cum_probs[:-1]])
    return float(max(np.max(np.abs(fx - e.cum_probs)), np.max(np.abs(fx - left))))


def birge_candidate_modes(sample) -> np.ndarray:
    """Midpoints between consecutive distinct observations."""
    pts = as_sample(sample).distinct()[0]
    return 0.5 * (pts[:-1] + pts[1:])


def birge_distances(sample) -> tuple[np.ndarray, np.ndarray]:
    """Candidate modes and the Kolmogorov distance of each mode-known fit."""
    s = as_sample(sample)
    pts, counts = s.distinct()
    if pts.size < 2:
        raise ValueError("Birgé's estimator needs at least two distinct observations")
    mid, _ = _birge_scan(pts, counts.astype(float), float(s.size))
    return 0.5 * (pts[:-1] + pts[1:]), mid


def data_point_mode_distances(sample) -> tuple[np.ndarray, np.ndarray]:
    """Distinct observations and the Kolmogorov distance of the mode-known
    fit whose mode sits at each of them (limit from the right)."""
    s = as_sample(sample)
    pts, counts = s.distinct()
    if pts.size < 2:
        raise ValueError("Birgé's estimator needs at least two distinct observations")
    _, at = _birge_scan(pts, counts.astype(float), float(s.size))
    return pts, at


def birge_fit(sample, cfg: BirgeConfig | None = None) -> StepDensity:
    """Birgé's unimodal estimator.

    Candidate modes are the midpoints between consecutive distinct
    observations and the observations themselves.  At an observation the
    mode-known MLE is unbounded, but its distribution function has a limit,
    so the best achievable Kolmogorov distance ``d*`` is taken over both
    sets.  The best midpoint (smallest mode on ties) is returned when its
    distance is within ``cfg.eta`` (default ``1/n``) of ``d*``; otherwise the
    mode is moved towards the best observation until the fit is within
    ``eta`` of ``d*``.
    """
    s = as_sample(sample)
    cfg = cfg or BirgeConfig(1.0 / s.size)
    pts, counts = s.distinct()
    if pts.size < 2:
        raise ValueError("Birgé's estimator needs at least two distinct observations")
    c = counts.astype(float)
    mid, at = _birge_scan(pts, c, float(s.size))
    best = min(float(mid.min()), float(at.min()))
    k = int(np.argmin(mid))
    if mid[k] <= best + cfg.eta:
        return grenander_mode_known(s, 0.5 * (pts[k] + pts[k + 1]))
    j = int(np.argmin(at))
    room = (pts[j + 1] - pts[j]) if j + 1 < pts.size else (pts[-1] - pts[0])
    delta = 0.5 * room
    fit = None
    for _ in range(200):
        delta *= 0.5
        mode = pts[j] + delta
        if not pts[j] < mode:
            break
        fit = grenander_mode_known(s, mode)
        if _ks_at_points(np.asarray(fit.cdf(pts)), c, float(s.size)) <= best + cfg.eta:
            return fit
    return fit
