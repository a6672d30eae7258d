"""Log-concave maximum likelihood density estimation.

The fitted log-density ``phi`` is concave and piecewise linear with kinks at
a subset of the distinct observations (the *active knots*).  It maximizes

    L(phi) = sum_i w_i phi(x_i) - integral exp(phi)

over such functions, where ``w_i`` are the empirical weights of the distinct
values.  The active-set solver alternates Newton steps on the values at the
active knots (with linear interpolation in between, the problem restricted to
a fixed knot set is a smooth concave program with a tridiagonal Hessian) and
knot additions driven by the directional derivative along hinge functions,

    D_i = integral_{x_1}^{x_i} (F_fit(t) - F_m(t)) dt,

which must be nonpositive everywhere and vanish at active knots.

The smoothed estimator convolves the MLE with a centred Gaussian whose
variance is the gap between the sample variance (divisor ``m``) and the
variance of the MLE.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import solveh_banded
from scipy.special import log_ndtr, ndtr

from .core import as_sample, integrate

__all__ = [
    "LogConcaveFit",
    "SmoothedLogConcaveFit",
    "ConvergenceError",
    "lc_fit",
    "lc_smooth",
    "optimality_residual",
]


class ConvergenceError(RuntimeError):
    """The active-set iteration hit its iteration cap."""


# ---------------------------------------------------------------------------
# integrals of exp over a unit segment:  j_k(d) = int_0^1 t^k e^{t d} dt

_SERIES_TERMS = 22


@numba.njit(cache=True)
def _jk(d):
    """(j0, j1, j2) for d <= 0."""
    n = d.size
    j0 = np.empty(n)
    j1 = np.empty(n)
    j2 = np.empty(n)
    for i in range(n):
        x = d[i]
        if abs(x) < 1.0:
            # sum_l x^l / (l! (k + l + 1))
            term = 1.0
            a0 = a1 = a2 = 0.0
            for l in range(_SERIES_TERMS):
                a0 += term / (l + 1.0)
                a1 += term / (l + 2.0)
                a2 += term / (l + 3.0)
                term *= x / (l + 1.0)
            j0[i], j1[i], j2[i] = a0, a1, a2
        else:
            e = math.exp(x)
            j0[i] = math.expm1(x) / x
            j1[i] = (e * (x - 1.0) + 1.0) / (x * x)
            j2[i] = (e * (x * x - 2.0 * x + 2.0) - 2.0) / (x * x * x)
    return j0, j1, j2


def _segment_integrals(r, s, second=True):
    """Integrals of exp(linear) over a unit segment with end values r, s.

    Returns J = int e^{(1-t)r + ts}, J10 = int (1-t) e^..., J01 = int t e^...,
    and (when ``second``) J20, J11, J02.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    swap = s > r
    hi = np.where(swap, s, r)
    d = np.where(swap, r - s, s - r)
    j0, j1, j2 = _jk(np.ascontiguousarray(d, dtype=float).ravel())
    j0, j1, j2 = j0.reshape(d.shape), j1.reshape(d.shape), j2.reshape(d.shape)
    with np.errstate(over="ignore"):
        scale = np.exp(hi)
    J = scale * j0
    a01 = scale * j1
    a10 = scale * (j0 - j1)
    J10 = np.where(swap, a01, a10)
    J01 = np.where(swap, a10, a01)
    if not second:
        return J, J10, J01
    a02 = scale * j2
    J11 = scale * (j1 - j2)
    a20 = scale * (j0 - 2.0 * j1 + j2)
    J20 = np.where(swap, a02, a20)
    J02 = np.where(swap, a20, a02)
    return J, J10, J01, J20, J11, J02


# ---------------------------------------------------------------------------
# fitted objects


@dataclass(frozen=True)
class LogConcaveFit:
    """Concave piecewise-linear log-density on the distinct observations."""

    knots: np.ndarray
    phi: np.ndarray
    active: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    n: int = 0
    iterations: int = 0

    def __post_init__(self):
        a = np.asarray(self.active, dtype=np.intp)
        left = self.knots[a[:-1]]
        right = self.knots[a[1:]]
        width = right - left
        r, s = self.phi[a[:-1]], self.phi[a[1:]]
        J, J10, J01, J20, J11, J02 = _segment_integrals(r, s)
        mass = width * J
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        object.__setattr__(self, "_left", left)
        object.__setattr__(self, "_width", width)
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "_slope", (s - r) / width)
        object.__setattr__(self, "_mass", mass)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_J01", J01)
        object.__setattr__(self, "_J02", J02)

    # -- geometry
    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def active_knots(self) -> np.ndarray:
        return self.knots[self.active]

    def log_linear_pieces(self):
        """(left, right, log value at left, log slope) per linear piece."""
        return self._left, self._left + self._width, self._r, self._slope

    # -- evaluation
    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.knots[0]) & (x <= self.knots[-1])
        out = np.where(inside, np.interp(x, self.knots, self.phi), -np.inf)
        return out if out.ndim else float(out)

    def pdf(self, x):
        out = np.exp(self.log_pdf(x))
        return out if np.ndim(out) else float(out)

    def _locate(self, x):
        j = np.searchsorted(self._left, x, side="right") - 1
        return np.clip(j, 0, self._left.size - 1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.knots[0], self.knots[-1])
        j = self._locate(xc)
        v = xc - self._left[j]
        bv = self._slope[j] * v
        # int_0^v e^{r + b t} dt = e^r * v * expm1(bv)/(bv)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(np.abs(bv) < 1e-12, 1.0 + 0.5 * bv, np.expm1(bv) / bv)
        part = np.exp(self._r[j]) * v * ratio
        out = np.clip(self._cum[j] + part, 0.0, 1.0)
        out = np.where(x >= self.knots[-1], 1.0, np.where(x <= self.knots[0], 0.0, out))
        return out if out.ndim else float(out)

    def quantile(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~((t > 0) & (t < 1))):
            raise ValueError("quantile level must lie in (0, 1)")
        q = t * self._cum[-1]
        j = np.clip(np.searchsorted(self._cum, q, side="right") - 1, 0, self._left.size - 1)
        rem = np.maximum(q - self._cum[j], 0.0)
        b = self._slope[j]
        scaled = rem * np.exp(-self._r[j])  # = int_0^v e^{bt} dt
        bs = b * scaled
        with np.errstate(invalid="ignore", divide="ignore"):
            v = np.where(np.abs(bs) < 1e-12, scaled * (1.0 - 0.5 * bs), np.log1p(bs) / b)
        out = np.clip(self._left[j] + np.minimum(v, self._width[j]), self.knots[0], self.knots[-1])
        return out if out.ndim else float(out)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-cdf draws; the segment is picked by its exact mass."""
        u = rng.random(count)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        return self.quantile(u)

    # -- moments
    def mean(self) -> float:
        return float(np.sum(self._width * (self._left * self._mass / self._width
                                           + self._width * self._J01)))

    def variance(self) -> float:
        mu = self.mean()
        c = self._left - mu
        w = self._width
        return float(np.sum(w * (c * c * self._mass / w + 2.0 * c * w * self._J01
                                 + w * w * self._J02)))

    def total_mass(self) -> float:
        return float(self._cum[-1])

    def square_integral(self) -> float:
        J = _segment_integrals(2.0 * self._r, 2.0 * (self._r + self._slope * self._width),
                               second=False)[0]
        return float(np.sum(self._width * J))

    def log_likelihood(self) -> float:
        """Mean log density over the data the fit was built from."""
        return float(np.dot(self.weights, self.phi))


# ---------------------------------------------------------------------------
# solver


def _objective(eta, widths, wts):
    J = _segment_integrals(eta[:-1], eta[1:], second=False)[0]
    return float(np.dot(wts, eta) - np.dot(widths, J))


def _newton_direction(eta, widths, wts):
    J, J10, J01, J20, J11, J02 = _segment_integrals(eta[:-1], eta[1:])
    grad = wts.copy()
    grad[:-1] -= widths * J10
    grad[1:] -= widths * J01
    diag = np.zeros_like(eta)
    diag[:-1] += widths * J20
    diag[1:] += widths * J02
    off = widths * J11
    # negative Hessian is positive definite and tridiagonal
    ab = np.zeros((2, eta.size))
    ab[0, 1:] = off
    ab[1] = diag
    step = solveh_banded(ab, grad, lower=False, check_finite=False)
    return grad, step


def _reduced_weights(x, w, idx):
    """Aggregate point weights onto the hat functions of the knot subset."""
    k = idx.size
    wts = np.zeros(k)
    wts[0] += w[idx[0]]
    for l in range(k - 1):
        a, b = idx[l], idx[l + 1]
        wts[l + 1] += w[b]
        if b > a + 1:
            inner = slice(a + 1, b)
            lam = (x[inner] - x[a]) / (x[b] - x[a])
            wts[l] += np.dot(w[inner], 1.0 - lam)
            wts[l + 1] += np.dot(w[inner], lam)
    return wts


def _optimize_on_knots(x, w, idx, eta, max_newton=100, grad_tol=1e-12):
    """Maximize L over phi that are linear between the knots ``idx``.

    Returns the new knot set (binding concavity constraints are dropped) and
    the values at those knots.
    """
    for _ in range(max_newton):
        widths = np.diff(x[idx])
        wts = _reduced_weights(x, w, idx)
        grad, step = _newton_direction(eta, widths, wts)
        if np.max(np.abs(grad)) < grad_tol:
            return idx, eta
        t_max = 1.0
        if idx.size > 2:
            slopes0 = np.diff(eta) / widths
            slopes1 = np.diff(eta + step) / widths
            c0 = np.diff(slopes0)  # <= 0 when concave
            c1 = np.diff(slopes1)
            bad = c1 > 0
            if bad.any():
                with np.errstate(divide="ignore", invalid="ignore"):
                    ts = np.where(bad, -c0 / (c1 - c0), np.inf)
                t_max = float(np.clip(ts.min(), 0.0, 1.0))
        f0 = _objective(eta, widths, wts)
        slope0 = float(np.dot(grad, step))
        if slope0 < 1e-26 and t_max == 1.0:
            return idx, eta + step
        # objective differences below rounding level cannot be resolved
        slack = 4e-16 * (1.0 + abs(f0))
        t = t_max
        while True:
            cand = eta + t * step
            with np.errstate(over="ignore", invalid="ignore"):
                f1 = _objective(cand, widths, wts)
            if np.isfinite(f1) and f1 >= f0 + 1e-4 * t * slope0 - slack:
                break
            if t < 1e-14:
                cand = eta
                break
            t *= 0.5
        eta = cand
        if t_max < 1.0 and t == t_max:
            # drop knots whose concavity constraint became binding
            slopes = np.diff(eta) / widths
            kink = np.diff(slopes)
            scale = np.maximum(np.abs(slopes[:-1]), np.abs(slopes[1:])) + 1.0
            keep_inner = kink < -1e-12 * scale
            keep = np.concatenate([[True], keep_inner, [True]])
            idx, eta = idx[keep], eta[keep]
        elif t < 1e-14:
            return idx, eta
    return idx, eta


def _directional_derivatives(x, w, phi):
    """D_i = int_{x_1}^{x_i} (F_fit - F_m) for every distinct observation."""
    width = np.diff(x)
    J, J10, _ = _segment_integrals(phi[:-1], phi[1:], second=False)
    mass = width * J
    F_left = np.concatenate([[0.0], np.cumsum(mass)])[:-1]
    W = np.cumsum(w)[:-1]
    seg = width * (F_left - W) + width * width * J10
    return np.concatenate([[0.0], np.cumsum(seg)])


def optimality_residual(fit: LogConcaveFit) -> float:
    """Largest directional derivative along an admissible hinge perturbation."""
    D = _directional_derivatives(fit.knots, fit.weights, fit.phi)
    return float(max(D.max(), 0.0))


def lc_fit(sample, tol: float = 1e-8, max_iter: int = 500) -> LogConcaveFit:
    """Log-concave MLE of a univariate sample."""
    s = as_sample(sample)
    x, counts = s.distinct()
    if x.size < 2:
        raise ValueError("log-concave MLE needs at least two distinct observations")
    w = counts / s.size
    # rescale to unit range for conditioning; phi shifts by log(scale)
    shift, scale = x[0], x[-1] - x[0]
    u = (x - shift) / scale
    idx = np.array([0, u.size - 1])
    eta = np.zeros(2)
    it = 0
    while True:
        idx, eta = _optimize_on_knots(u, w, idx, eta)
        phi = np.interp(u, u[idx], eta)
        D = _directional_derivatives(u, w, phi)
        D[idx] = -np.inf
        j = int(np.argmax(D))
        if D[j] <= tol:
            break
        it += 1
        if it > max_iter:
            raise ConvergenceError(
                f"active-set iteration did not converge in {max_iter} steps "
                f"(optimality gap {D[j]:.3e})")
        pos = np.searchsorted(idx, j)
        idx = np.insert(idx, pos, j)
        eta = np.insert(eta, pos, phi[j])
    phi = phi - math.log(scale)
    return LogConcaveFit(x, phi, idx, w, s.size, it)


# ---------------------------------------------------------------------------
# smoothing


def _log_phi_diff(za, zb):
    """log(Phi(zb) - Phi(za)) for za <= zb, stable in both tails."""
    flip = za > 0
    lo = np.where(flip, -zb, za)
    hi = np.where(flip, -za, zb)
    lhi = log_ndtr(hi)
    llo = log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lhi + np.log1p(-np.exp(llo - lhi))
    return np.where(hi > lo, out, -np.inf)


@dataclass(frozen=True)
class SmoothedLogConcaveFit:
    """Log-concave MLE convolved with N(0, gamma_sq)."""

    base: LogConcaveFit
    gamma_sq: float

    @property
    def gamma(self) -> float:
        return math.sqrt(self.gamma_sq)

    @property
    def support(self) -> tuple[float, float]:
        """Effective support: the base support padded by 10 standard deviations."""
        lo, hi = self.base.support
        g = self.gamma
        return lo - 10.0 * g, hi + 10.0 * g

    def _pieces(self, x):
        b = self.base
        x = np.asarray(x, dtype=float)[..., None]
        return x, b._left, b._width, b._r, b._slope

    def pdf(self, x):
        if self.gamma_sq <= 0:
            return self.base.pdf(x)
        g = self.gamma
        xx, a, w, r, beta = self._pieces(x)
        mu = xx - a
        shift = beta * self.gamma_sq
        za = (-mu - shift) / g
        zb = (w - mu - shift) / g
        logval = r + beta * mu + 0.5 * beta * beta * self.gamma_sq + _log_phi_diff(za, zb)
        out = np.exp(logval).sum(axis=-1)
        return out if np.ndim(x) else float(out)

    def cdf(self, x):
        if self.gamma_sq <= 0:
            return self.base.cdf(x)
        g = self.gamma
        xx, a, w, r, beta = self._pieces(x)
        mu = xx - a
        gs = self.gamma_sq
        # int_0^w e^{beta v} Phi((mu - v)/g) dv
        #   = M(w) Phi((mu - w)/g) + int_0^w M(v) phi_g(mu - v) dv,  M(v) = expm1(beta v)/beta
        bw = beta * w
        with np.errstate(invalid="ignore", divide="ignore"):
            Mw = np.where(np.abs(bw) < 1e-12, w * (1.0 + 0.5 * bw), np.expm1(bw) / beta)
        first = np.exp(r) * Mw * ndtr((mu - w) / g)
        z0 = -mu / g
        z1 = (w - mu) / g
        small = np.abs(bw) < 1e-3
        # |beta w| >= 1e-3: difference of the exponentially tilted and plain masses
        shift = beta * gs
        logtilt = r + beta * mu + 0.5 * beta * beta * gs + _log_phi_diff(z0 - shift / g, z1 - shift / g)
        plain = np.exp(r + _log_phi_diff(z0, z1))
        with np.errstate(invalid="ignore", divide="ignore"):
            second_big = (np.exp(logtilt) - plain) / beta
        # |beta w| < 1e-3: expand M(v) = v + beta v^2/2 + beta^2 v^3/6
        p0, p1 = ndtr(z1) - ndtr(z0), np.exp(-0.5 * z0 * z0) - np.exp(-0.5 * z1 * z1)
        p1 = p1 / math.sqrt(2.0 * math.pi)
        f0 = np.exp(-0.5 * z0 * z0) / math.sqrt(2.0 * math.pi)
        f1 = np.exp(-0.5 * z1 * z1) / math.sqrt(2.0 * math.pi)
        p2 = p0 + z0 * f0 - z1 * f1
        p3 = (z0 * z0 + 2.0) * f0 - (z1 * z1 + 2.0) * f1
        I1 = mu * p0 + g * p1
        I2 = mu * mu * p0 + 2.0 * mu * g * p1 + gs * p2
        I3 = mu ** 3 * p0 + 3.0 * mu * mu * g * p1 + 3.0 * mu * gs * p2 + gs * g * p3
        second_small = np.exp(r) * (I1 + 0.5 * beta * I2 + beta * beta * I3 / 6.0)
        second = np.where(small, second_small, second_big)
        out = np.clip((first + second).sum(axis=-1), 0.0, 1.0)
        return out if np.ndim(x) else float(out)

    def mean(self) -> float:
        return self.base.mean()

    def variance(self) -> float:
        return self.base.variance() + self.gamma_sq

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        draws = self.base.sample(count, rng)
        return draws + self.gamma * rng.standard_normal(count)

    def square_integral(self) -> float:
        lo, hi = self.support
        return integrate(lambda t: self.pdf(t) ** 2, lo, hi, tol=1e-10,
                         breakpoints=self.base.active_knots)


def lc_smooth(fit: LogConcaveFit, sample) -> SmoothedLogConcaveFit:
    """Smoothed MLE whose variance matches the sample variance (divisor m)."""
    s = as_sample(sample)
    gamma_sq = float(np.var(s.values)) - fit.variance()
    if gamma_sq < 0:
        if gamma_sq < -1e-8 * max(fit.variance(), 1e-300):
            warnings.warn(f"sample variance below fitted variance by {-gamma_sq:.3e}; "
                          "clamping smoothing variance at 0", RuntimeWarning, stacklevel=2)
        gamma_sq = 0.0
    return SmoothedLogConcaveFit(fit, gamma_sq)
