"""Slow, independent reference implementations used by the tests.

None of these share code with the package: they recompute each quantity
from its definition by brute force, exhaustive search or a generic
optimizer.
"""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
from scipy import optimize, stats


def ecdf_count(sample, x):
    v = np.asarray(sample, dtype=float)
    return np.array([np.sum(v <= t) for t in np.atleast_1d(x)]) / v.size


def generalized_inverse(sample, t):
    """inf{x : F(x) >= t} by scanning the sorted values."""
    v = np.sort(np.asarray(sample, dtype=float))
    n = v.size
    for k in range(n):
        if (k + 1) / n >= t - 1e-12:
            return float(v[k])
    return float(v[-1])


def lcm_slopes(points, counts, anchor):
    """Left derivatives of the least concave majorant of the ECDF at each
    distinct point, via the min-max formula
    ``slope_i = min_{j<i} max_{k>=i} (F_k - F_j) / (x_k - x_j)``
    with vertex 0 at ``(anchor, 0)``."""
    x = np.concatenate([[anchor], np.asarray(points, float)])
    F = np.concatenate([[0.0], np.cumsum(counts) / np.sum(counts)])
    K = x.size
    S = np.full((K, K), -np.inf)
    for j in range(K):
        for k in range(j + 1, K):
            S[j, k] = (F[k] - F[j]) / (x[k] - x[j])
    # M[j, i] = max_{k >= i} S[j, k]
    M = np.maximum.accumulate(S[:, ::-1], axis=1)[:, ::-1]
    return np.array([min(M[j, i] for j in range(i)) for i in range(1, K)])


def antitonic_exhaustive(values, weights=None):
    """Weighted least-squares nonincreasing fit by enumerating every
    partition into contiguous blocks."""
    y = np.asarray(values, float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, float)
    n = y.size
    best, best_fit = math.inf, None
    for cuts in itertools.product([False, True], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        fit = np.empty(n)
        for a, b in zip(bounds[:-1], bounds[1:]):
            fit[a:b] = np.dot(w[a:b], y[a:b]) / w[a:b].sum()
        if np.any(np.diff(fit) > 1e-12):
            continue
        sse = float(np.dot(w, (y - fit) ** 2))
        if sse < best - 1e-15:
            best, best_fit = sse, fit
    return best_fit


def _exp_segment(a, b, width):
    """int_0^width exp(a + (b - a) t / width) dt."""
    d = b - a
    if abs(d) < 1e-9:
        return width * math.exp(a) * (1.0 + d / 2.0 + d * d / 6.0)
    return width * (math.exp(b) - math.exp(a)) / d


def lc_objective(x, w, phi):
    return float(np.dot(w, phi) - sum(_exp_segment(phi[i], phi[i + 1], x[i + 1] - x[i])
                                      for i in range(x.size - 1)))


def lc_mle_slsqp(sample):
    """Log-concave MLE by SLSQP over log-density values at every distinct
    point, with explicit concavity constraints."""
    x, c = np.unique(np.asarray(sample, float), return_counts=True)
    w = c / c.sum()
    dx = np.diff(x)

    def neg(phi):
        return -lc_objective(x, w, phi)

    def concave(phi):
        s = np.diff(phi) / dx
        return s[:-1] - s[1:]

    phi0 = np.full(x.size, -math.log(x[-1] - x[0]))
    cons = [{"type": "ineq", "fun": concave}] if x.size > 2 else []
    res = optimize.minimize(neg, phi0, method="SLSQP", constraints=cons,
                            options={"ftol": 1e-14, "maxiter": 2000})
    return x, res.x, -res.fun


def min_t_bruteforce(x, y, lower, upper):
    """Minimum-t over pooled points in [lower, upper] from raw counts."""
    m, n = len(x), len(y)
    pts = np.unique(np.concatenate([x, y, [lower, upper]]))
    best = None
    for t in pts:
        if t < lower or t > upper:
            continue
        f1 = np.sum(np.asarray(x) <= t) / m
        f2 = np.sum(np.asarray(y) <= t) / n
        num = f2 - f1
        var = f1 * (1 - f1) / m + f2 * (1 - f2) / n
        if var == 0:
            if num == 0:
                continue
            val = -math.inf if num < 0 else math.inf
        else:
            val = num / math.sqrt(var)
        best = val if best is None else min(best, val)
    return 0.0 if best is None else best


def tsep_grid(x, y, p, grid=100_000):
    """TSEP by brute-force minimization over quantile levels.

    The grid is uniform on ``[p, 1-p]`` plus points just inside every open
    end ``k/N`` of a level piece, where the infimum may be approached.
    """
    m, n = len(x), len(y)
    N = m + n
    pooled = np.sort(np.concatenate([x, y]))
    z = np.linspace(p, 1 - p, grid)
    ends = np.arange(1, N + 1) / N
    z = np.concatenate([z, ends, ends + 1e-13])
    z = z[(z >= p) & (z <= 1 - p)]
    # H^-1(z) is the k-th order statistic, k = #{levels j/N < z}
    levels = np.arange(1, N + 1) / N
    idx = np.searchsorted(levels, z, side="left")
    q = pooled[np.clip(idx, 0, N - 1)]
    f1 = np.searchsorted(np.sort(x), q, side="right") / m
    f2 = np.searchsorted(np.sort(y), q, side="right") / n
    return math.sqrt(m * n / N) * float(np.min((f2 - f1) / np.sqrt(z * (1 - z))))


def wrs_ranks(x, y):
    """WRS z-form from midranks of the pooled sample."""
    m, n = len(x), len(y)
    r = stats.rankdata(np.concatenate([x, y]))
    u = r[:m].sum() - m * (m + 1) / 2.0  # pairs with x > y, ties counted 1/2
    return math.sqrt(12.0 * m * n / (m + n + 1.0)) * (u / (m * n) - 0.5)


def normal_quantile_mp(u):
    mpmath.mp.dps = 40
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(u) - 1))


def quad(func, a, b, **kw):
    """scipy adaptive quadrature (a different rule from the package's)."""
    from scipy.integrate import quad as _quad
    kw.setdefault("limit", 500)
    kw.setdefault("epsabs", 1e-12)
    kw.setdefault("epsrel", 1e-12)
    return _quad(func, a, b, **kw)[0]


class ScipyDensity:
    """Adapter giving a frozen scipy distribution the ``pdf``/``support``
    interface the Hellinger routines expect."""

    def __init__(self, dist, lo, hi):
        self.dist = dist
        self.support = (lo, hi)

    def pdf(self, x):
        return self.dist.pdf(x)

    def cdf(self, x):
        return self.dist.cdf(x)
