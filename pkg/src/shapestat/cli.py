"""Command-line interface.

Every subcommand writes one JSON document (``schema_version`` 1) or a CSV
table.  Exit codes: 0 on success, 2 on invalid input, 3 on numerical
failure; errors are reported as JSON on stderr.  Non-finite numbers are
written as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` so that the JSON
stays standard.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Sample
from .dominance import FAMILIES, STATISTICS, run_dominance_test
from .hellinger import HELLINGER_FAMILIES, estimate_hellinger
from .kde import kde_fit
from .logconcave import ConvergenceError, lc_fit, lc_smooth
from .simulate import (CV_METHODS, DEFAULT_SEED, DOMINANCE_CASES, HELLINGER_CASES,
                       HELLINGER_ESTIMATORS, ScenarioSpec, TestSpec, crossval_risk,
                       hellinger_experiment, power_curve, power_near_data)
from .unimodal import birge_fit

__all__ = ["main", "read_samples", "InputError"]

SCHEMA_VERSION = 1
DENSITY_FAMILIES = ("unimodal", "logconcave", "logconcave-smoothed", "kde-lscv", "kde-plugin")
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(ValueError):
    """Malformed command-line input or data file."""


def read_samples(path) -> Sample:
    """Read a single-column CSV of finite reals.

    Blank lines are skipped and the first non-blank line may be the header
    ``value``.  LF and CRLF line endings are accepted.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8") from exc
    values = []
    seen_content = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        token = line.strip().lstrip("﻿")
        if not token:
            continue
        if not seen_content:
            seen_content = True
            if token.strip('"').lower() == "value":
                continue
        try:
            v = float(token.strip('"'))
        except ValueError:
            raise InputError(f"{path}, line {lineno}: cannot parse {token!r} as a number") from None
        if not math.isfinite(v):
            raise InputError(f"{path}, line {lineno}: non-finite value {token!r}")
        values.append(v)
    if not values:
        raise InputError(f"{path} contains no observations")
    return Sample(np.asarray(values))


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected a comma-separated list of integers, got {text!r}") from None


def _choice_list(text: str, allowed, what: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    for it in items:
        if it not in allowed:
            raise InputError(f"unknown {what} {it!r}; expected one of {', '.join(allowed)}")
    if not items:
        raise InputError(f"no {what} given")
    return items


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _to_json(doc: dict) -> str:
    return json.dumps(_clean({"schema_version": SCHEMA_VERSION, **doc}), indent=2,
                      allow_nan=False) + "\n"


def _to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    rows = [_clean(r) for r in rows]
    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


def _emit(args, doc: dict, rows: list[dict]):
    text = _to_csv(rows) if args.format == "csv" else _to_json(doc)
    if args.output and args.output != "-":
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _density_fit(sample: Sample, family: str):
    if family == "unimodal":
        return birge_fit(sample)
    if family == "logconcave":
        return lc_fit(sample)
    if family == "logconcave-smoothed":
        return lc_smooth(lc_fit(sample), sample)
    if family == "kde-lscv":
        return kde_fit(sample, "lscv")
    if family == "kde-plugin":
        return kde_fit(sample, "plugin")
    raise InputError(f"unknown family {family!r}")


def _params(fit) -> dict:
    if hasattr(fit, "heights"):
        return {"mode": fit.mode_location, "breakpoints": fit.breakpoints.tolist(),
                "heights": fit.heights.tolist()}
    if hasattr(fit, "gamma_sq"):
        return {"gamma_sq": fit.gamma_sq, "knots": fit.base.active_knots.tolist(),
                "log_density": fit.base.phi[fit.base.active].tolist()}
    if hasattr(fit, "phi"):
        return {"knots": fit.active_knots.tolist(), "log_density": fit.phi[fit.active].tolist()}
    return {"bandwidth": fit.bandwidth}


def cmd_density(args):
    x = read_samples(args.x)
    if args.grid < 2:
        raise InputError("--grid must be at least 2")
    fit = _density_fit(x, args.family)
    lo, hi = fit.support
    grid = np.linspace(lo, hi, args.grid)
    pdf = np.asarray(fit.pdf(grid), dtype=float)
    if hasattr(fit, "heights"):
        # step densities: every breakpoint appears twice, with the left and
        # the right limit, so the exported curve integrates exactly
        b = fit.breakpoints
        inner = ~np.isin(grid, b)
        right = np.concatenate([fit.heights, [0.0]])
        left = np.concatenate([[0.0], fit.heights])
        grid = np.concatenate([grid[inner], b, b])
        pdf = np.concatenate([pdf[inner], left, right])
        order = np.lexsort((np.arange(grid.size), grid))
        grid, pdf = grid[order], pdf[order]
    cdf = np.asarray(fit.cdf(grid), dtype=float)
    rows = [{"x": float(a), "pdf": float(b), "cdf": float(c)} for a, b, c in zip(grid, pdf, cdf)]
    return {"command": "density", "family": args.family, "n": x.size, "grid": rows,
            "params": _params(fit)}, rows


def cmd_dominance(args):
    x, y = read_samples(args.x), read_samples(args.y)
    res = run_dominance_test(x, y, args.family, args.stat, args.p, args.alpha, args.conservative)
    doc = {"command": "dominance", **res.to_dict(), "n_x": x.size, "n_y": y.size}
    return doc, [doc]


def cmd_hellinger(args):
    x, y = read_samples(args.x), read_samples(args.y)
    res = estimate_hellinger(x, y, args.family, args.ci_level)
    doc = {"command": "hellinger", **res.to_dict()}
    return doc, [doc]


def _gamma_grid(args) -> list[float]:
    if args.gammas:
        return _float_list(args.gammas)
    return [round(k / (args.gamma_steps - 1), 12) for k in range(args.gamma_steps)]


def _tests(args) -> list[TestSpec]:
    stats_ = _choice_list(args.stat, STATISTICS, "statistic")
    fams = _choice_list(args.family, FAMILIES, "family")
    tests = [TestSpec(s, f) for s in stats_ for f in fams]
    if args.conservative:
        if "tsep" not in stats_:
            raise InputError("--conservative needs the tsep statistic")
        tests += [TestSpec("tsep", f, True) for f in fams]
    return tests


def _curve_doc(command: str, curves, extra: dict):
    out, rows = [], []
    for label, c in curves.items():
        recs = c.records()
        out.append({"test": label, "points": recs})
        rows.extend({"test": label, **r} for r in recs)
    return {"command": command, **extra, "curves": out}, rows


def cmd_simulate_power(args):
    spec = ScenarioSpec("dominance", args.case, 0.0, args.m, args.n, args.p, args.alpha,
                        args.reps, args.seed)
    gammas = _gamma_grid(args)
    curves = power_curve(spec, _tests(args), gammas)
    extra = {"case": args.case, "m": args.m, "n": args.n, "p": args.p, "alpha": args.alpha,
             "seed": args.seed, "reps": args.reps}
    return _curve_doc("simulate power", curves, extra)


def cmd_simulate_hellinger(args):
    estimators = _choice_list(args.estimators, HELLINGER_ESTIMATORS, "estimator")
    reference = None
    if args.case == "c":
        if not (args.ref_x and args.ref_y):
            raise InputError("case c needs --ref-x and --ref-y reference samples")
        reference = (read_samples(args.ref_x), read_samples(args.ref_y))
    n_grid = _int_list(args.n_grid)
    if not n_grid or min(n_grid) < 5:
        raise InputError("--n-grid needs sample sizes of at least 5")
    curve = hellinger_experiment(args.case, n_grid, args.reps, estimators, args.seed,
                                 args.ci_level, reference)
    doc = {"command": "simulate hellinger", "case": args.case, "truth": curve.truth,
           "seed": args.seed, "reps": args.reps, "ci_level": args.ci_level,
           "points": curve.records}
    return doc, curve.records


def cmd_crossval(args):
    x = read_samples(args.x)
    methods = _choice_list(args.methods, CV_METHODS, "method")
    table = crossval_risk(x, methods, args.folds, args.seed)
    doc = {"command": "crossval", "folds": args.folds, "seed": args.seed, "n": x.size,
           "rows": table.rows}
    return doc, table.rows


def cmd_power_near_data(args):
    x, y = read_samples(args.x), read_samples(args.y)
    gammas = _gamma_grid(args)
    curves = power_near_data(x, y, gammas, args.reps, _tests(args), args.seed, args.p,
                             args.alpha, args.projection_size)
    extra = {"n_x": x.size, "n_y": y.size, "p": args.p, "alpha": args.alpha,
             "seed": args.seed, "reps": args.reps, "projection_size": args.projection_size}
    return _curve_doc("power-near-data", curves, extra)


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _common(p, randomized=False):
    p.add_argument("--output", "-o", default="-", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    if randomized:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _test_args(p, default_stat="min-t", default_family="empirical"):
    p.add_argument("--stat", default=default_stat,
                   help=f"comma-separated statistics from {', '.join(STATISTICS)}")
    p.add_argument("--family", default=default_family,
                   help=f"comma-separated families from {', '.join(FAMILIES)}")
    p.add_argument("--conservative", action="store_true",
                   help="also report TSEP with the C_mn * z_alpha critical value")
    p.add_argument("--p", type=float, default=0.05, help="trimming level")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--gammas", help="comma-separated gamma grid")
    p.add_argument("--gamma-steps", type=int, default=11,
                   help="number of equally spaced gammas in [0, 1] when --gammas is absent")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shapestat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("density", help="fit a density and export it on a grid")
    p.add_argument("--x", required=True)
    p.add_argument("--family", choices=DENSITY_FAMILIES, default="logconcave")
    p.add_argument("--grid", type=int, default=200)
    _common(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("dominance", help="test non-dominance of x over y")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--stat", choices=STATISTICS, default="min-t")
    p.add_argument("--family", choices=FAMILIES, default="empirical")
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--conservative", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("hellinger", help="squared Hellinger distance with a Wald interval")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--family", choices=HELLINGER_FAMILIES, default="logconcave-smoothed")
    p.add_argument("--ci-level", type=float, default=0.95)
    _common(p)
    p.set_defaults(func=cmd_hellinger)

    p = sub.add_parser("simulate", help="Monte Carlo studies")
    simsub = p.add_subparsers(dest="study", required=True, parser_class=_Parser)
    q = simsub.add_parser("power", help="power curves of the dominance tests")
    q.add_argument("--case", choices=DOMINANCE_CASES, default="a")
    q.add_argument("--m", type=int, default=100)
    q.add_argument("--n", type=int, default=100)
    _test_args(q)
    _common(q, randomized=True)
    q.set_defaults(func=cmd_simulate_power)
    q = simsub.add_parser("hellinger", help="bias, MSE and coverage of Hellinger plug-ins")
    q.add_argument("--case", choices=HELLINGER_CASES, default="b")
    q.add_argument("--n-grid", default="50,100,150,200,250,300,350,400,450,500")
    q.add_argument("--reps", type=int, default=10000)
    q.add_argument("--estimators", default=",".join(HELLINGER_ESTIMATORS))
    q.add_argument("--ci-level", type=float, default=0.95)
    q.add_argument("--ref-x", help="reference sample for case c (first density)")
    q.add_argument("--ref-y", help="reference sample for case c (second density)")
    _common(q, randomized=True)
    q.set_defaults(func=cmd_simulate_hellinger)

    p = sub.add_parser("crossval", help="cross-validated MISE and log-likelihood risks")
    p.add_argument("--x", required=True)
    p.add_argument("--methods", default=",".join(CV_METHODS))
    p.add_argument("--folds", type=int, default=10)
    _common(p, randomized=True)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("power-near-data", help="power along a path of fits near the data")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--projection-size", type=int, default=1000)
    _test_args(p, default_family="logconcave")
    _common(p, randomized=True)
    p.set_defaults(func=cmd_power_near_data)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"schema_version": SCHEMA_VERSION, "error": kind,
                                 "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        doc, rows = args.func(args)
        _emit(args, doc, rows)
    except (ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", str(exc), EXIT_NUMERIC)
    except (ValueError, OSError) as exc:
        return _fail("input", str(exc), EXIT_INPUT)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
