"""Samples, empirical distribution functions, pooled-quantile trimming and
normal-distribution helpers shared by the rest of the package."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.special import erfc

__all__ = [
    "Sample",
    "Ecdf",
    "TrimInterval",
    "as_sample",
    "build_ecdf",
    "pooled_ecdf",
    "quantile",
    "trim_interval",
    "normal_cdf",
    "normal_quantile",
    "integrate",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
# cumulative levels are k/n computed in floating point; t = k/n must hit level k
_LEVEL_TOL = 1e-12


@dataclass(frozen=True)
class Sample:
    """Finite observations stored sorted ascending."""

    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("sample must contain at least one observation")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample contains NaN or infinite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.size

    def distinct(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values and their multiplicities."""
        return np.unique(self.values, return_counts=True)


def as_sample(values) -> Sample:
    if isinstance(values, Sample):
        return values
    return Sample(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous step distribution function.

    ``cum_probs[k]`` is the mass at or below ``support_points[k]``.
    """

    support_points: np.ndarray
    cum_probs: np.ndarray
    sample_size: int
    counts: np.ndarray = field(repr=False, default=None)

    def __call__(self, x):
        idx = np.searchsorted(self.support_points, x, side="right")
        out = np.where(idx > 0, self.cum_probs[np.maximum(idx - 1, 0)], 0.0)
        return out if np.ndim(x) else float(out)

    def left_limit(self, x):
        """F(x-)."""
        idx = np.searchsorted(self.support_points, x, side="left")
        out = np.where(idx > 0, self.cum_probs[np.maximum(idx - 1, 0)], 0.0)
        return out if np.ndim(x) else float(out)

    def quantile(self, t):
        return quantile(self, t)


def build_ecdf(sample) -> Ecdf:
    s = as_sample(sample)
    pts, counts = s.distinct()
    cum = np.cumsum(counts) / s.size
    cum[-1] = 1.0
    return Ecdf(pts, cum, s.size, counts)


def pooled_ecdf(x, y) -> Ecdf:
    """ECDF of the concatenated samples."""
    return build_ecdf(np.concatenate([as_sample(x).values, as_sample(y).values]))


def quantile(ecdf: Ecdf, t):
    """Generalized inverse ``inf{x : F(x) >= t}`` for ``t`` in (0, 1)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~((t_arr > 0.0) & (t_arr < 1.0))):
        raise ValueError(f"quantile level must lie in (0, 1), got {t}")
    idx = np.searchsorted(ecdf.cum_probs, t_arr - _LEVEL_TOL, side="left")
    idx = np.minimum(idx, ecdf.support_points.size - 1)
    out = ecdf.support_points[idx]
    return out if t_arr.ndim else float(out)


@dataclass(frozen=True)
class TrimInterval:
    lower: float
    upper: float
    p: float | None = None
    degenerate: bool = False

    def contains(self, x):
        return (np.asarray(x) >= self.lower) & (np.asarray(x) <= self.upper)


def trim_interval(pooled: Ecdf, p: float) -> TrimInterval:
    """The pooled-quantile interval ``[H^-1(p), H^-1(1-p)]``."""
    if not 0.0 < p < 0.5:
        raise ValueError(f"trimming level p must lie in (0, 1/2), got {p}")
    lo = quantile(pooled, p)
    hi = quantile(pooled, 1.0 - p)
    degenerate = lo >= hi
    if degenerate:
        warnings.warn("pooled sample is degenerate: trimmed interval is a single point",
                      RuntimeWarning, stacklevel=2)
    return TrimInterval(lo, hi, p, degenerate)


# ---------------------------------------------------------------------------
# standard normal


def normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2) if np.ndim(x) \
        else 0.5 * math.erfc(-float(x) / _SQRT2)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT2PI


# Acklam's rational approximation (relative error < 1.2e-9) followed by
# Halley refinement against the erfc-based cdf.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(u: float) -> float:
    if u < _P_LOW:
        q = math.sqrt(-2.0 * math.log(u))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if u > 1.0 - _P_LOW:
        return -_acklam(1.0 - u)
    q = u - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(u: float) -> float:
    """Inverse of the standard normal cdf."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError(f"normal quantile requires u in (0, 1), got {u}")
    if u == 0.5:
        return 0.0
    # refine in the tail nearer to u so the residual keeps relative precision
    if u > 0.5:
        return -normal_quantile(1.0 - u)
    x = _acklam(u)
    for _ in range(2):
        e = 0.5 * math.erfc(-x / _SQRT2) - u
        w = e * _SQRT2PI * math.exp(0.5 * x * x)
        x = x - w / (1.0 + 0.5 * x * w)
    return x


# ---------------------------------------------------------------------------
# adaptive Gauss-Legendre quadrature over panels

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


def _panel_integrals(func, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(func(pts.ravel()), dtype=float).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


def integrate(func: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              tol: float = 1e-10, breakpoints: Iterable[float] = (),
              initial_panels: int = 32, max_depth: int = 30) -> float:
    """Integrate a vectorized ``func`` over ``[a, b]``.

    Panels are bisected until each panel's two-half estimate agrees with
    the whole-panel estimate to within its share of ``tol``.
    """
    if not b > a:
        return 0.0
    edges = np.unique(np.concatenate([
        np.linspace(a, b, initial_panels + 1),
        np.clip(np.asarray(list(breakpoints), dtype=float), a, b),
    ]))
    lo, hi = edges[:-1], edges[1:]
    total = 0.0
    coarse = _panel_integrals(func, lo, hi)
    for _ in range(max_depth):
        mid = 0.5 * (lo + hi)
        left = _panel_integrals(func, lo, mid)
        right = _panel_integrals(func, mid, hi)
        fine = left + right
        err = np.abs(fine - coarse)
        ok = err <= tol * (hi - lo) / (b - a) + 1e-15 * np.abs(fine)
        total += math.fsum(fine[ok])
        if ok.all():
            return total
        keep = ~ok
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    return total + math.fsum(coarse)
