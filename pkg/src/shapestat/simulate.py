"""Monte Carlo harness: distribution zoo, power curves, Hellinger curves,
cross-validated risks and power near an observed pair of samples.

Every replicate draws from its own random stream,

    SeedSequence(seed, spawn_key=(scenario hash, replicate index)),

so results depend only on the seed and the scenario, never on how the
replicates are scheduled.  ``SHAPESTAT_THREADS`` caps the number of worker
processes (unset or 0 means one per CPU).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .core import as_sample, integrate, pooled_ecdf, trim_interval
from .dominance import FAMILIES, STATISTICS, _decide, compute_statistic, fit_handle
from .hellinger import estimate_hellinger, hellinger_sq, kde_bias_corrected, _wald
from .kde import kde_fit
from .logconcave import lc_fit, lc_smooth
from .unimodal import birge_fit

__all__ = [
    "DEFAULT_SEED",
    "DOMINANCE_CASES",
    "HELLINGER_CASES",
    "HELLINGER_ESTIMATORS",
    "CV_METHODS",
    "Mixture",
    "ScenarioSpec",
    "TestSpec",
    "PowerCurve",
    "HellingerCurve",
    "RiskTable",
    "dominance_pair",
    "hellinger_pair",
    "true_hellinger",
    "sample_scenario",
    "replicate_rng",
    "worker_count",
    "power_curve",
    "hellinger_experiment",
    "crossval_risk",
    "power_near_data",
]

DEFAULT_SEED = 20240607
DOMINANCE_CASES = ("a", "b", "c", "d", "e")
HELLINGER_CASES = ("a", "b", "c", "d", "e", "f")
HELLINGER_ESTIMATORS = ("unimodal", "logconcave", "logconcave-smoothed", "kde-naive",
                        "kde-bias-corrected")
CV_METHODS = ("unimodal", "logconcave", "logconcave-smoothed", "kde-lscv", "kde-plugin")


# ---------------------------------------------------------------------------
# distribution zoo


@dataclass(frozen=True)
class Mixture:
    """Finite mixture of frozen scipy distributions."""

    components: tuple
    weights: tuple[float, ...]

    def pdf(self, x):
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def mean(self) -> float:
        return float(sum(w * c.mean() for w, c in zip(self.weights, self.components)))

    def var(self) -> float:
        mu = self.mean()
        second = sum(w * (c.var() + c.mean() ** 2) for w, c in zip(self.weights, self.components))
        return float(second - mu * mu)

    def rvs(self, size: int, random_state: np.random.Generator) -> np.ndarray:
        k = random_state.choice(len(self.components), size=size, p=np.asarray(self.weights))
        out = np.empty(size)
        for j, c in enumerate(self.components):
            idx = np.flatnonzero(k == j)
            if idx.size:
                out[idx] = c.rvs(size=idx.size, random_state=random_state)
        return out


def _gamma(shape: float, scale: float):
    return stats.gamma(shape, scale=scale)


def _pareto(shape: float, scale: float):
    # cdf 1 - (scale / x)^shape for x >= scale
    return stats.pareto(shape, scale=scale)


def dominance_pair(case: str, gamma: float):
    """The pair ``(F_gamma, G_gamma)`` of a dominance scenario.

    Normal distributions are given by mean and standard deviation, Gamma by
    shape and scale, Pareto by shape and scale.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if case == "a":
        return stats.norm(gamma, 1.0), stats.norm(0.0, 1.0)
    if case == "b":
        return stats.norm(3.0 * gamma, 1.0), stats.norm(0.5, 2.0)
    if case == "c":
        return _gamma(2.0, 0.1 + 0.4 * gamma), _gamma(1.0, 0.5)
    if case == "d":
        return _gamma(2.0, 1.0), _pareto(0.5 + 2.0 * gamma, 1.0)
    if case == "e":
        return stats.norm(0.0, 1.0), Mixture(
            (stats.norm(2.0 * gamma + 4.0, 1.0), stats.norm(2.0 * gamma - 2.0, 1.0)), (0.5, 0.5))
    raise ValueError(f"unknown dominance case {case!r}; expected one of {DOMINANCE_CASES}")


def hellinger_pair(case: str, reference=None):
    """The density pair ``(f, g)`` of a Hellinger scenario.

    Case ``c`` uses smoothed log-concave fits of two reference samples, which
    must be supplied as ``reference=(x, y)``.
    """
    if case == "a":
        return _gamma(4.0, 1.0), _gamma(3.0, 1.0)
    if case == "b":
        return stats.norm(1.0, 1.0), stats.norm(0.0, 1.0)
    if case == "c":
        if reference is None:
            raise ValueError("Hellinger case 'c' needs reference samples (x, y)")
        rx, ry = (as_sample(r) for r in reference)
        return lc_smooth(lc_fit(rx), rx), lc_smooth(lc_fit(ry), ry)
    if case == "d":
        return stats.expon(scale=1.0), stats.expon(scale=0.5)  # rates 1 and 2
    if case == "e":
        return dominance_pair("e", 1.0)
    if case == "f":
        return stats.norm(0.0, 1.0), _gamma(3.61, 1.41)
    raise ValueError(f"unknown Hellinger case {case!r}; expected one of {HELLINGER_CASES}")


def true_hellinger(case: str, reference=None) -> float:
    """Population squared Hellinger distance of a Hellinger scenario."""
    if case == "a":
        # Gamma(4,1) vs Gamma(3,1): affinity Gamma(3.5) / sqrt(Gamma(4) Gamma(3))
        return 1.0 - math.exp(gammaln(3.5) - 0.5 * (gammaln(4.0) + gammaln(3.0)))
    if case == "b":
        return 1.0 - math.exp(-1.0 / 8.0)
    if case == "d":
        # Exp(1) vs Exp(2): affinity 2 sqrt(2) / 3
        return 1.0 - 2.0 * math.sqrt(2.0) / 3.0
    f, g = hellinger_pair(case, reference)
    if case == "c":
        return hellinger_sq(f, g)
    if case == "e":
        lo, hi, br = -12.0, 18.0, (0.0, 6.0)
    else:
        lo, hi, br = 0.0, 40.0, (1.0, 5.0)
    aff = integrate(lambda t: np.sqrt(f.pdf(t) * g.pdf(t)), lo, hi, tol=1e-13,
                    breakpoints=br, initial_panels=256)
    return 1.0 - aff


def _draw(dist, size: int, rng: np.random.Generator) -> np.ndarray:
    if hasattr(dist, "rvs"):
        return np.asarray(dist.rvs(size=size, random_state=rng), dtype=float)
    return np.asarray(dist.sample(size, rng), dtype=float)


def sample_scenario(case: str, gamma: float, size, rng: np.random.Generator,
                    study: str = "dominance", reference=None):
    """Draw ``(x, y)`` from a scenario; ``size`` is ``m`` or ``(m, n)``."""
    m, n = (size, size) if np.isscalar(size) else size
    if study == "dominance":
        F, G = dominance_pair(case, gamma)
    elif study == "hellinger":
        F, G = hellinger_pair(case, reference)
    else:
        raise ValueError(f"unknown study {study!r}")
    x = _draw(F, int(m), rng)
    y = _draw(G, int(n), rng)
    return x, y


# ---------------------------------------------------------------------------
# seeding and scheduling


def _scenario_key(*parts) -> tuple[int, int]:
    digest = hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).digest()
    return int.from_bytes(digest[:4], "little"), int.from_bytes(digest[4:8], "little")


def replicate_rng(seed: int, key: tuple[int, int], replicate: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(*key, int(replicate)))
    return np.random.default_rng(ss)


def worker_count() -> int:
    raw = os.environ.get("SHAPESTAT_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"SHAPESTAT_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ValueError("SHAPESTAT_THREADS must be nonnegative")
    return k if k > 0 else (os.cpu_count() or 1)


def _run_all(func: Callable, tasks: Sequence, workers: int | None = None) -> list:
    """Evaluate ``func`` on every task, returning results in task order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# power curves


@dataclass(frozen=True)
class ScenarioSpec:
    study: str = "dominance"
    case: str = "a"
    gamma: float = 0.0
    m: int = 100
    n: int = 100
    p: float = 0.05
    alpha: float = 0.05
    replicates: int = 10000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.study not in ("dominance", "hellinger"):
            raise ValueError(f"unknown study {self.study!r}")
        cases = DOMINANCE_CASES if self.study == "dominance" else HELLINGER_CASES
        if self.case not in cases:
            raise ValueError(f"unknown {self.study} case {self.case!r}; expected one of {cases}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.m < 1 or self.n < 1:
            raise ValueError("sample sizes must be positive")


@dataclass(frozen=True)
class TestSpec:
    statistic: str
    family: str
    conservative: bool = False

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}; expected one of {STATISTICS}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.conservative and self.statistic != "tsep":
            raise ValueError("the conservative critical value applies to the TSEP statistic only")

    @property
    def label(self) -> str:
        suffix = "-conservative" if self.conservative else ""
        return f"{self.statistic}{suffix}/{self.family}"


@dataclass(frozen=True)
class PowerCurve:
    label: str
    gammas: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    reps: int
    rejections: np.ndarray = field(repr=False, default=None)

    def records(self) -> list[dict]:
        return [{"gamma": float(g), "estimate": float(e), "se": float(s), "reps": self.reps}
                for g, e, s in zip(self.gammas, self.estimate, self.se)]


def _power_replicate(task):
    x, y, tests, p, alpha = task
    pooled = pooled_ecdf(x, y)
    D = trim_interval(pooled, p)
    m, n = x.size, y.size
    handles = {}
    values = {}
    out = []
    for t in tests:
        if t.family not in handles:
            eta = 1.0 / (m + n)
            handles[t.family] = (fit_handle(x, t.family, eta), fit_handle(y, t.family, eta))
        key = (t.statistic, t.family)
        if key not in values:
            F1, F2 = handles[t.family]
            values[key] = compute_statistic(t.statistic, F1, F2, pooled, D)
        res = _decide(t.statistic, values[key], m, n, alpha, t.conservative, D, t.family, ())
        out.append(res.reject)
    return out


def _scenario_task(task):
    spec, gamma, rep, tests = task
    key = _scenario_key("dominance", spec.case, repr(float(gamma)), spec.m, spec.n)
    rng = replicate_rng(spec.seed, key, rep)
    x, y = sample_scenario(spec.case, gamma, (spec.m, spec.n), rng)
    return _power_replicate((x, y, tests, spec.p, spec.alpha))


def _curves(tests, gammas, rejections, reps) -> dict[str, PowerCurve]:
    out = {}
    for j, t in enumerate(tests):
        counts = rejections[:, j]
        est = counts / reps
        se = np.sqrt(est * (1.0 - est) / reps)
        out[t.label] = PowerCurve(t.label, np.asarray(gammas, float), est, se, reps, counts)
    return out


def power_curve(spec: ScenarioSpec, tests: Sequence[TestSpec],
                gamma_grid: Sequence[float] | None = None,
                workers: int | None = None) -> dict[str, PowerCurve]:
    """Rejection frequencies of each test at each gamma.

    All tests of one replicate share the same data and fitted densities.
    ``gamma_grid`` defaults to ``[spec.gamma]``.
    """
    if spec.study != "dominance":
        raise ValueError("power curves need a dominance scenario")
    tests = tuple(tests)
    gammas = [spec.gamma] if gamma_grid is None else [float(g) for g in gamma_grid]
    for g in gammas:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {g}")
    tasks = [(spec, g, r, tests) for g in gammas for r in range(spec.replicates)]
    results = np.asarray(_run_all(_scenario_task, tasks, workers), dtype=bool)
    results = results.reshape(len(gammas), spec.replicates, len(tests))
    return _curves(tests, gammas, results.sum(axis=1), spec.replicates)


# ---------------------------------------------------------------------------
# Hellinger experiments


@dataclass(frozen=True)
class HellingerCurve:
    case: str
    truth: float
    records: list[dict]

    def select(self, estimator: str) -> list[dict]:
        return [r for r in self.records if r["estimator"] == estimator]


def _hellinger_replicate(task):
    case, n, rep, seed, estimators, reference, ci_level = task
    key = _scenario_key("hellinger", case, int(n))
    rng = replicate_rng(seed, key, rep)
    x, y = sample_scenario(case, 0.0, (n, n), rng, study="hellinger", reference=reference)
    out = []
    kdes = lcs = None
    for est in estimators:
        # fits shared between estimators of the same replicate
        if est in ("kde-naive", "kde-bias-corrected") and kdes is None:
            kdes = (kde_fit(x, "lscv"), kde_fit(y, "lscv"))
        if est in ("logconcave", "logconcave-smoothed") and lcs is None:
            lcs = (lc_fit(x), lc_fit(y))
        if est == "kde-naive":
            res = _wald(est, hellinger_sq(*kdes), n, n, ci_level, with_ci=False)
        elif est == "kde-bias-corrected":
            res = kde_bias_corrected(x, y, ci_level, fits=kdes)
        elif est == "logconcave":
            res = _wald(est, hellinger_sq(*lcs), n, n, ci_level)
        elif est == "logconcave-smoothed":
            sm = (lc_smooth(lcs[0], x), lc_smooth(lcs[1], y))
            res = _wald(est, hellinger_sq(*sm), n, n, ci_level)
        else:
            res = estimate_hellinger(x, y, est, ci_level)
        lo, hi = res.ci_h2 if res.ci_h2 is not None else (math.nan, math.nan)
        out.append((res.h2, lo, hi))
    return out


def hellinger_experiment(case: str, n_grid: Sequence[int], replicates: int,
                         estimators: Sequence[str] = HELLINGER_ESTIMATORS,
                         seed: int = DEFAULT_SEED, ci_level: float = 0.95,
                         reference=None, workers: int | None = None) -> HellingerCurve:
    """Bias, MSE and Wald-interval coverage of Hellinger plug-ins over ``n``.

    Each record holds, for one ``(n, estimator)``: the mean estimate, bias
    against the population value with its standard error, ``sqrt(n)|bias|``,
    ``n * MSE``, coverage with its standard error and mean interval length
    (NaN for estimators without an interval).
    """
    for est in estimators:
        if est not in HELLINGER_ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}; expected one of {HELLINGER_ESTIMATORS}")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    truth = true_hellinger(case, reference)
    ref = None if reference is None else tuple(as_sample(r).values for r in reference)
    estimators = tuple(estimators)
    tasks = [(case, int(n), r, seed, estimators, ref, ci_level)
             for n in n_grid for r in range(replicates)]
    raw = np.asarray(_run_all(_hellinger_replicate, tasks, workers), dtype=float)
    raw = raw.reshape(len(n_grid), replicates, len(estimators), 3)
    records = []
    for i, n in enumerate(n_grid):
        for j, est in enumerate(estimators):
            h = raw[i, :, j, 0]
            lo, hi = raw[i, :, j, 1], raw[i, :, j, 2]
            mean = math.fsum(h) / replicates
            bias = mean - truth
            sd = float(np.std(h, ddof=1)) if replicates > 1 else math.nan
            mse = math.fsum((h - truth) ** 2) / replicates
            has_ci = not np.all(np.isnan(lo))
            cover = float(np.mean((lo <= truth) & (truth <= hi))) if has_ci else math.nan
            records.append({
                "n": int(n),
                "estimator": est,
                "estimate": mean,
                "se": sd / math.sqrt(replicates),
                "reps": replicates,
                "bias": bias,
                "sqrt_n_abs_bias": math.sqrt(n) * abs(bias),
                "sqrt_n_abs_bias_se": math.sqrt(n) * sd / math.sqrt(replicates),
                "n_mse": n * mse,
                "mean_abs_error": math.fsum(np.abs(h - truth)) / replicates,
                "coverage": cover,
                "coverage_se": math.sqrt(cover * (1 - cover) / replicates) if has_ci else math.nan,
                "ci_length": float(np.mean(hi - lo)) if has_ci else math.nan,
            })
    return HellingerCurve(case, truth, records)


# ---------------------------------------------------------------------------
# cross-validated risks


@dataclass(frozen=True)
class RiskTable:
    rows: list[dict]

    def row(self, method: str) -> dict:
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)


def _cv_fit(method, train):
    if callable(method):
        return method(train)
    if method == "unimodal":
        return birge_fit(train)
    if method == "logconcave":
        return lc_fit(train)
    if method == "logconcave-smoothed":
        return lc_smooth(lc_fit(train), train)
    if method == "kde-lscv":
        return kde_fit(train, "lscv")
    if method == "kde-plugin":
        return kde_fit(train, "plugin")
    raise ValueError(f"unknown method {method!r}; expected one of {CV_METHODS}")


def _square_integral(fit) -> float:
    if hasattr(fit, "square_integral"):
        return float(fit.square_integral())
    lo, hi = fit.support
    return integrate(lambda t: np.asarray(fit.pdf(t)) ** 2, lo, hi, tol=1e-10)


def crossval_risk(x, methods: Sequence = CV_METHODS, folds: int = 10,
                  seed: int = DEFAULT_SEED) -> RiskTable:
    """K-fold estimates of ``int f^2 - 2 int f f0`` and of the held-out
    negative log-likelihood (density floored at 1e-12).

    ``methods`` may mix names from :data:`CV_METHODS` with
    ``(name, callable)`` pairs, the callable mapping a training sample to a
    density with ``pdf`` and ``support``.  A fit that fails on one fold is
    recorded and skipped.
    """
    s = as_sample(x)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if s.size < folds:
        raise ValueError("sample size must be at least the number of folds")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x63760000,)))
    perm = rng.permutation(s.size)
    assign = np.empty(s.size, dtype=int)
    assign[perm] = np.arange(s.size) % folds
    values = s.values
    rows = []
    for method in methods:
        name, how = (method if isinstance(method, tuple) else (method, method))
        mise, nll, failures = [], [], []
        for k in range(folds):
            train, test = values[assign != k], values[assign == k]
            try:
                fit = _cv_fit(how, train)
                dens = np.asarray(fit.pdf(test), dtype=float)
                mise.append(_square_integral(fit) - 2.0 * float(np.mean(dens)))
                nll.append(float(np.mean(-np.log(np.maximum(dens, 1e-12)))))
            except (ValueError, ArithmeticError, RuntimeError) as exc:
                failures.append({"fold": k, "error": str(exc)})
        ok = len(mise)
        rows.append({
            "method": name,
            "mise_err": math.fsum(mise) / ok if ok else math.nan,
            "mise_err_se": float(np.std(mise, ddof=1) / math.sqrt(ok)) if ok > 1 else math.nan,
            "neg_loglik": math.fsum(nll) / ok if ok else math.nan,
            "folds_ok": ok,
            "failures": failures,
        })
    return RiskTable(rows)


# ---------------------------------------------------------------------------
# power near the observed data


@dataclass(frozen=True)
class _MixtureFit:
    """``(1 - gamma) * base + gamma * own`` for two samplable fits."""

    base: object
    own: object
    gamma: float

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        pick = rng.random(count) < self.gamma
        out = np.empty(count)
        k = int(pick.sum())
        out[pick] = self.own.sample(k, rng)
        out[~pick] = self.base.sample(count - k, rng)
        return out


def _near_data_task(task):
    fx, fy, m, n, seed, key, rep, tests, p, alpha = task
    rng = replicate_rng(seed, key, rep)
    x = fx.sample(m, rng)
    y = fy.sample(n, rng)
    return _power_replicate((x, y, tests, p, alpha))


def power_near_data(x, y, gamma_grid: Sequence[float], replicates: int,
                    tests: Sequence[TestSpec] = (TestSpec("min-t", "logconcave"),),
                    seed: int = DEFAULT_SEED, p: float = 0.05, alpha: float = 0.05,
                    projection_size: int = 1000,
                    workers: int | None = None) -> dict[str, PowerCurve]:
    """Power along the path from the pooled fit (gamma = 0) to the per-sample
    fits (gamma = 1).

    Smoothed log-concave fits are computed for ``x``, ``y`` and the pooled
    sample.  For each gamma the two mixtures ``(1 - gamma) pooled + gamma own``
    are approximately projected onto the smoothed log-concave class by
    drawing ``projection_size`` points from each and refitting.  Replicates
    then draw samples of the original sizes from the projected fits.
    """
    xs, ys = as_sample(x), as_sample(y)
    m, n = xs.size, ys.size
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    try:
        fx = lc_smooth(lc_fit(xs), xs)
        fy = lc_smooth(lc_fit(ys), ys)
        pooled_values = np.concatenate([xs.values, ys.values])
        fp = lc_smooth(lc_fit(pooled_values), pooled_values)
    except ValueError as exc:
        raise ValueError(f"smoothed log-concave fit of the observed data failed: {exc}") from exc
    tests = tuple(tests)
    gammas = [float(g) for g in gamma_grid]
    data_key = hashlib.sha256(xs.values.tobytes() + b"|" + ys.values.tobytes()).hexdigest()[:16]
    tasks = []
    for g in gammas:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {g}")
        key = _scenario_key("near-data", data_key, repr(g))
        prng = replicate_rng(seed, key, -1 & 0xFFFFFFFF)
        projected = []
        for own in (fx, fy):
            draws = _MixtureFit(fp, own, g).sample(projection_size, prng)
            projected.append(lc_smooth(lc_fit(draws), draws))
        tasks.extend((projected[0], projected[1], m, n, seed, key, r, tests, p, alpha)
                     for r in range(replicates))
    results = np.asarray(_run_all(_near_data_task, tasks, workers), dtype=bool)
    results = results.reshape(len(gammas), replicates, len(tests))
    return _curves(tests, gammas, results.sum(axis=1), replicates)
