"""``tailcast`` command-line interface.

Every subcommand accepts ``--config FILE`` holding a JSON object whose keys
are that subcommand's option names (dashes or underscores). Values from the
file become defaults, so explicit flags still win. ``TAILCAST_SEED``
overrides any configured seed.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .backtest import BacktestConfig, ingest, run_backtest, write_report
from .evt import extreme_quantile, fit_farima
from .exceptions import BacktestError, ConfigError, DataError, DomainError, FitError, TailcastError
from .linear import ar_to_ma, farima_ma_coeffs, fit_ar_lad, fit_ar_ols
from .metrics import pr_points, roc_points, sample_metrics, tally_arrays
from .predictors import (
    ar_predictor,
    baseline_predictor,
    farima_predictor,
    marginal_threshold,
    predict_arrays,
)
from .series import EmpiricalDistribution, generalized_inverse, write_csv
from .simulate import InnovationSpec, SimConfig, metadata, simulate_ar, simulate_farima, simulate_ma
from .taildep import RegVarSpec, farima_lambda_grid, lambda_opt_ar1, lambda_opt_info

log = logging.getLogger("tailcast")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4
SEED_ENV = "TAILCAST_SEED"


def _floats(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text) -> List[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _json_arg(text):
    if not isinstance(text, str):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from exc


def _write_json(obj, path: Optional[str]):
    blob = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(blob)
    else:
        with open(path, "w") as fh:
            fh.write(blob)


# -------------------------------------------------------------- handlers

def _innovations(a) -> InnovationSpec:
    return InnovationSpec(a.family, a.alpha, a.scale)


def cmd_simulate(a) -> int:
    spec = _innovations(a)
    cfg = SimConfig(n=a.n, seed=a.seed, burn_in=a.burn_in, truncation=a.truncation)
    if a.model == "ar":
        if not a.phi:
            raise ConfigError("--phi is required for AR simulation")
        s = simulate_ar(a.phi, spec, cfg)
        extra = {"model": "ar", "phi": a.phi}
    elif a.model == "ma":
        if not a.coeffs:
            raise ConfigError("--coeffs is required for MA simulation")
        s = simulate_ma(a.coeffs, spec, cfg)
        extra = {"model": "ma", "coeffs": a.coeffs}
    else:
        if a.d is None:
            raise ConfigError("--d is required for FARIMA simulation")
        s = simulate_farima(a.d, spec, cfg)
        extra = {"model": "farima", "d": a.d}
    write_csv(a.out, s)
    sidecar = a.sidecar or os.path.splitext(a.out)[0] + ".json"
    _write_json(metadata(spec, cfg, **extra), sidecar)
    return EXIT_OK


def _load(a) -> np.ndarray:
    if not a.data:
        raise ConfigError("--data is required")
    return ingest(a.data, block_max=a.block_max).require_complete()


def cmd_fit_ar(a) -> int:
    y = _load(a)
    y = y - y.mean() if a.center else y
    fit = fit_ar_ols(y, a.order) if a.loss == "ols" else fit_ar_lad(y, a.order)
    _write_json(fit.to_dict(), a.out)
    return EXIT_OK


def cmd_fit_farima(a) -> int:
    y = _load(a)
    _write_json(fit_farima(y - y.mean()).to_dict(), a.out)
    return EXIT_OK


def cmd_quantile(a) -> int:
    y = _load(a)
    if a.method == "empirical":
        q = generalized_inverse(EmpiricalDistribution(np.sort(y)), a.p)
    else:
        q = extreme_quantile(y, a.p)
    _write_json({"p": a.p, "method": a.method, "quantile": q, "n": int(y.size)}, a.out)
    return EXIT_OK


def cmd_lambda_opt(a) -> int:
    spec = RegVarSpec(a.alpha, a.p_eps)
    out = {"model": a.model, "alpha": a.alpha, "p_eps": a.p_eps, "h": a.h}
    if a.model == "ar1":
        if not a.phi or len(a.phi) != 1:
            raise ConfigError("--phi must hold exactly one coefficient for ar1")
        out["lambda_opt"] = lambda_opt_ar1(a.phi[0], spec, a.h)
        out["phi"] = a.phi
    else:
        if a.model == "ar":
            if not a.phi:
                raise ConfigError("--phi is required")
            coeffs = ar_to_ma(a.phi, a.K)
            out["phi"] = a.phi
        elif a.model == "farima":
            if a.d is None:
                raise ConfigError("--d is required")
            coeffs = farima_ma_coeffs(a.d, a.K)
            out["d"] = a.d
        else:
            if not a.coeffs:
                raise ConfigError("--coeffs is required")
            coeffs = a.coeffs
        info = lambda_opt_info(spec, coeffs, a.h)
        out.update(lambda_opt=info.value, degenerate=info.degenerate, K=info.K)
    _write_json(out, a.out)
    return EXIT_OK


def cmd_lambda_grid(a) -> int:
    grid = farima_lambda_grid(a.d_grid, a.alpha_grid, a.p_eps, a.h, a.K, a.tail_correction)
    fh = sys.stdout if a.out in (None, "-") else open(a.out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "alpha", "lambda"])
        for d, al, v in grid.rows():
            w.writerow([repr(d), repr(al), "" if v is None else repr(v)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_predict(a) -> int:
    y = _load(a)
    n_train = a.train_len if a.train_len else int(round(a.train_frac * y.size))
    if not 0 < n_train < y.size:
        raise ConfigError(f"training length {n_train} must lie strictly inside the series length {y.size}")
    train = y[:n_train]
    mean = float(train.mean())
    ev = marginal_threshold(train, a.p)
    if a.model == "baseline":
        pred = baseline_predictor(ev, a.h)
    elif a.model == "ar":
        fit = fit_ar_ols(train - mean, a.order) if a.loss == "ols" else fit_ar_lad(train - mean, a.order)
        pred = ar_predictor(fit, a.h, train, a.p, center=mean, quantile_method=a.quantile, event_threshold=ev)
    else:
        ff = fit_farima(train - mean)
        pred = farima_predictor(
            ff.d_hat, ff.alpha_hat, a.h, a.ell, train, a.p, center=mean, quantile_method=a.quantile, event_threshold=ev
        )
    res = predict_arrays(pred, y)
    keep = res.times >= n_train
    fh = sys.stdout if a.out in (None, "-") else open(a.out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "score", "alarm", "outcome"])
        for t, s, al, oc, r in zip(res.times[keep], res.scores[keep], res.alarms[keep], res.outcomes[keep], res.resolved[keep]):
            w.writerow([int(t), repr(float(s)), int(al), int(oc) if r else ""])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if a.model_out:
        _write_json(pred.to_dict(), a.model_out)
    return EXIT_OK


def _read_predictions(paths):
    scores, alarms, outcomes = [], [], []
    pending = 0
    for path in paths:
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames is None or not {"score", "alarm", "outcome"} <= set(rd.fieldnames):
                raise DataError(f"{path}: expected columns t,score,alarm,outcome")
            for row in rd:
                if row["outcome"].strip() == "":
                    pending += 1
                    continue
                try:
                    scores.append(float(row["score"]))
                    alarms.append(int(row["alarm"]) != 0)
                    outcomes.append(int(row["outcome"]) != 0)
                except ValueError as exc:
                    raise DataError(f"{path}: malformed row {row!r}") from exc
    return np.array(scores), np.array(alarms, dtype=bool), np.array(outcomes, dtype=bool), pending


def _write_curve(path, curve, cols):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols) + ["threshold"])
        for x, y, t in zip(curve.x, curve.y, curve.thresholds):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(t))])


def cmd_report(a) -> int:
    if not a.predictions:
        raise ConfigError("--predictions is required")
    s, al, oc, pending = _read_predictions(a.predictions)
    if s.size == 0:
        raise DataError("no resolved predictions to report on")
    counts = tally_arrays(al, oc)
    out = {"counts": counts.to_dict(), "metrics": sample_metrics(counts).to_dict(), "n_pending_excluded": pending}
    _write_json(out, a.out)
    if a.roc:
        _write_curve(a.roc, roc_points(s, oc), ("fpr", "tpr"))
    if a.pr:
        _write_curve(a.pr, pr_points(s, oc), ("recall", "precision"))
    return EXIT_OK


def cmd_backtest(a) -> int:
    y = _load(a)
    models = _json_arg(a.models) if a.models is not None else None
    raw = {
        "window_len": a.window_len,
        "stride": a.stride,
        "horizons": a.horizons,
        "levels": a.levels,
        "quantile_method": a.quantile_method,
        "seed": a.seed,
        "window_rule": a.window_rule,
        "max_skip_fraction": a.max_skip_fraction,
        "n_jobs": a.n_jobs,
    }
    if models is not None:
        raw["models"] = models
    cfg = BacktestConfig.from_dict(raw)
    report = run_backtest(y, cfg)
    write_report(report, a.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser, data=False, out_help="output path ('-' for stdout)"):
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("--out", default="-", help=out_help)
    if data:
        p.add_argument("--data", help="input CSV with columns timestamp,value")
        p.add_argument("--block-max", type=int, default=None, help="aggregate to block maxima of this length first")


def _innovation_args(p):
    p.add_argument("--family", default="symmetric-alpha-stable", help="symmetric-alpha-stable, pareto, cauchy or gaussian")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tailcast", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an AR, MA or FARIMA path")
    _common(p, out_help="CSV path for t,value rows")
    p.add_argument("--model", choices=("ar", "ma", "farima"), default="ar")
    p.add_argument("--phi", type=_floats, default=None)
    p.add_argument("--coeffs", type=_floats, default=None)
    p.add_argument("--d", type=float, default=None)
    _innovation_args(p)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--truncation", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sidecar", default=None, help="JSON metadata path (default: alongside --out)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-ar", help="fit an AR(d) model")
    _common(p, data=True)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--loss", choices=("ols", "lad"), default="ols")
    p.add_argument("--no-center", dest="center", action="store_false", help="fit to the raw values")
    p.set_defaults(func=cmd_fit_ar, center=True)

    p = sub.add_parser("fit-farima", help="estimate alpha and d of a FARIMA(0,d,0) model")
    _common(p, data=True)
    p.set_defaults(func=cmd_fit_farima)

    p = sub.add_parser("quantile", help="empirical or GP-based quantile of a series")
    _common(p, data=True)
    p.add_argument("--p", type=float, required=False, default=0.99)
    p.add_argument("--method", choices=("empirical", "gp"), default="empirical")
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("lambda-opt", help="optimal extremal precision of a linear model")
    _common(p)
    p.add_argument("--model", choices=("ar1", "ar", "farima", "ma"), default="ar1")
    p.add_argument("--phi", type=_floats, default=None)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--coeffs", type=_floats, default=None)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--p-eps", type=float, default=0.5)
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--K", type=int, default=1_000_000)
    p.set_defaults(func=cmd_lambda_opt)

    p = sub.add_parser("lambda-opt-grid", help="FARIMA optimal precision over a (d, alpha) grid")
    _common(p, out_help="CSV path for d,alpha,lambda rows")
    p.add_argument("--d-grid", type=_floats, default=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45])
    p.add_argument("--alpha-grid", type=_floats, default=[1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9])
    p.add_argument("--p-eps", type=float, default=0.5)
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--K", type=int, default=1_000_000)
    p.add_argument("--tail-correction", action="store_true")
    p.set_defaults(func=cmd_lambda_grid)

    p = sub.add_parser("predict", help="calibrate on a training prefix and score the rest")
    _common(p, data=True, out_help="CSV path for t,score,alarm,outcome rows")
    p.add_argument("--model", choices=("baseline", "ar", "farima"), default="ar")
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--quantile", choices=("empirical", "gp"), default="empirical")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--loss", choices=("ols", "lad"), default="lad")
    p.add_argument("--ell", type=int, default=168)
    p.add_argument("--train-len", type=int, default=None)
    p.add_argument("--train-frac", type=float, default=0.5)
    p.add_argument("--model-out", default=None, help="write the calibrated predictor as JSON")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("backtest", help="rolling-window backtest")
    _common(p, data=True, out_help="output directory")
    d = BacktestConfig()
    p.add_argument("--window-len", type=int, default=d.window_len)
    p.add_argument("--stride", type=int, default=d.stride)
    p.add_argument("--horizons", type=_ints, default=list(d.horizons))
    p.add_argument("--levels", type=_floats, default=list(d.levels))
    p.add_argument("--models", default=None, help="JSON list of model objects")
    p.add_argument("--quantile-method", choices=("empirical", "gp"), default=d.quantile_method)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--window-rule", choices=("all_horizons", "any_horizon"), default=d.window_rule)
    p.add_argument("--max-skip-fraction", type=float, default=d.max_skip_fraction)
    p.add_argument("--n-jobs", type=int, default=d.n_jobs)
    p.set_defaults(func=cmd_backtest, out="backtest_out")

    p = sub.add_parser("report", help="skill report from prediction CSVs")
    _common(p)
    p.add_argument("--predictions", nargs="+", default=None)
    p.add_argument("--roc", default=None, help="write ROC figure data here")
    p.add_argument("--pr", default=None, help="write PR figure data here")
    p.set_defaults(func=cmd_report)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv: List[str]) -> None:
    """Load ``--config`` and the seed override as subparser defaults."""
    pre, _ = ap.parse_known_args(argv)
    sub = next(a for a in ap._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[pre.command]
    dests = {a.dest for a in sp._actions}
    defaults = {}
    if getattr(pre, "config", None):
        try:
            with open(pre.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {pre.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in dests or key in ("config", "help"):
                raise ConfigError(f"unknown option {k!r} for '{pre.command}'")
            defaults[key] = v
    env = os.environ.get(SEED_ENV)
    if env is not None and "seed" in dests:
        try:
            defaults["seed"] = int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    if defaults:
        sp.set_defaults(**defaults)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
    except ConfigError as exc:
        print(f"tailcast: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (ConfigError, DomainError, argparse.ArgumentTypeError) as exc:
        print(f"tailcast: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"tailcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BacktestError, FitError) as exc:
        print(f"tailcast: fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except TailcastError as exc:
        print(f"tailcast: error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
