"""Rolling-window backtests of exceedance predictors."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .evt import fit_farima
from .exceptions import BacktestError, ConfigError, DataError, TailcastError
from .linear import fit_ar_lad, fit_ar_ols
from .metrics import ConfusionCounts, pr_points, roc_points, sample_metrics, tally_arrays
from .predictors import (
    QUANTILE_METHODS,
    ar_weights,
    farima_weights,
    score_threshold,
)
from .series import (
    EmpiricalDistribution,
    Series,
    aggregate_block_max,
    as_array,
    ecdf_eval,
    generalized_inverse,
    interpolate_missing,
    read_csv,
)
from .simulate import RNG_NAME

log = logging.getLogger(__name__)

WINDOW_RULES = ("all_horizons", "any_horizon")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    order: Optional[int] = None
    loss: Optional[str] = None
    ell: Optional[int] = None

    @property
    def label(self) -> str:
        if self.kind == "ar":
            return f"ar{self.order}-{self.loss}"
        if self.kind == "farima":
            return f"farima{self.ell}"
        return self.kind

    @classmethod
    def parse(cls, raw) -> "ModelSpec":
        if isinstance(raw, ModelSpec):
            return raw
        if isinstance(raw, str):
            raw = {"type": raw}
        if not isinstance(raw, dict):
            raise ConfigError(f"model entry must be a mapping or name, got {raw!r}")
        kind = str(raw.get("type", raw.get("kind", ""))).lower()
        if kind == "baseline":
            return cls("baseline")
        if kind == "ar":
            order = raw.get("order", 168)
            loss = str(raw.get("loss", "ols")).lower()
            if not isinstance(order, int) or order < 1:
                raise ConfigError(f"AR order must be a positive integer, got {order!r}")
            if loss not in ("ols", "lad"):
                raise ConfigError(f"AR loss must be 'ols' or 'lad', got {loss!r}")
            return cls("ar", order=order, loss=loss)
        if kind == "farima":
            ell = raw.get("ell", 168)
            if not isinstance(ell, int) or ell < 1:
                raise ConfigError(f"FARIMA history must be a positive integer, got {ell!r}")
            return cls("farima", ell=ell)
        raise ConfigError(f"unknown model type {kind!r}; choose baseline, ar or farima")

    def to_dict(self) -> dict:
        out = {"type": self.kind}
        if self.kind == "ar":
            out.update(order=self.order, loss=self.loss)
        elif self.kind == "farima":
            out["ell"] = self.ell
        return out


DEFAULT_MODELS = (ModelSpec("baseline"), ModelSpec("ar", 168, "ols"), ModelSpec("farima", ell=168))


@dataclass(frozen=True)
class BacktestConfig:
    window_len: int = 4320
    stride: int = 12
    horizons: Tuple[int, ...] = (1, 6, 12, 18)
    levels: Tuple[float, ...] = (0.90, 0.95, 0.99)
    models: Tuple[ModelSpec, ...] = DEFAULT_MODELS
    quantile_method: str = "empirical"
    seed: int = 0
    window_rule: str = "all_horizons"
    max_skip_fraction: float = 0.2
    n_jobs: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
            object.__setattr__(self, "levels", tuple(float(p) for p in self.levels))
            object.__setattr__(self, "models", tuple(ModelSpec.parse(m) for m in self.models))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("window_len", "stride", "seed", "n_jobs"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if not self.window_len >= self.stride >= 1:
            raise ConfigError("need window_len >= stride >= 1")
        if not self.horizons or any(h < 1 for h in self.horizons):
            raise ConfigError("horizons must be a non-empty list of integers >= 1")
        if not self.levels or any(not 0 < p < 1 for p in self.levels):
            raise ConfigError("levels must be a non-empty list in (0, 1)")
        if not self.models:
            raise ConfigError("at least one model is required")
        if len({m.label for m in self.models}) != len(self.models):
            raise ConfigError("duplicate model entries")
        if self.quantile_method not in QUANTILE_METHODS:
            raise ConfigError(f"quantile_method must be one of {QUANTILE_METHODS}")
        if self.window_rule not in WINDOW_RULES:
            raise ConfigError(f"window_rule must be one of {WINDOW_RULES}")
        if not 0 <= self.max_skip_fraction <= 1:
            raise ConfigError("max_skip_fraction must lie in [0, 1]")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "BacktestConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown backtest config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        """Canonical form; ``n_jobs`` is excluded because it cannot affect results."""
        return {
            "window_len": self.window_len,
            "stride": self.stride,
            "horizons": list(self.horizons),
            "levels": list(self.levels),
            "models": [m.to_dict() for m in self.models],
            "quantile_method": self.quantile_method,
            "seed": self.seed,
            "window_rule": self.window_rule,
            "max_skip_fraction": self.max_skip_fraction,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Window:
    index: int
    train_start: int
    train_end: int  # inclusive
    targets: Dict[int, Optional[int]]


def enumerate_windows(series_len: int, cfg: BacktestConfig) -> List[Window]:
    """Windows starting at 0 with the configured stride.

    Under ``all_horizons`` a window is kept only if every target
    ``train_end + h`` is observed. Under ``any_horizon`` the smallest
    horizon suffices and unobservable targets are dropped per horizon.
    """
    W = cfg.window_len
    need = max(cfg.horizons) if cfg.window_rule == "all_horizons" else min(cfg.horizons)
    if series_len < W + need:
        raise DataError(f"series of length {series_len} is shorter than window {W} plus horizon {need}")
    last_start = series_len - W - need
    out = []
    for i, start in enumerate(range(0, last_start + 1, cfg.stride)):
        end = start + W - 1
        tg = {h: (end + h if end + h < series_len else None) for h in cfg.horizons}
        out.append(Window(i, start, end, tg))
    return out


def window_count(series_len: int, cfg: BacktestConfig) -> int:
    need = max(cfg.horizons) if cfg.window_rule == "all_horizons" else min(cfg.horizons)
    span = series_len - cfg.window_len - need
    return span // cfg.stride + 1 if span >= 0 else 0


# ------------------------------------------------------------- per window

@dataclass
class _Issue:
    model: str
    h: int
    p: float
    alarm: bool
    outcome: Optional[bool]
    u_hat: float


def _linear_issues(label, weights_by_h, centred, raw, window, cfg, event_thr):
    issues = []
    for h, w in weights_by_h.items():
        L = w.size
        if L > centred.size:
            raise DataError(f"{label}: history {L} exceeds window length")
        scores = np.convolve(centred, w, mode="valid")
        s_end = float(scores[-1])
        dist = EmpiricalDistribution(np.sort(scores))
        u = ecdf_eval(dist, s_end)
        tgt = window.targets[h]
        for p in cfg.levels:
            if cfg.quantile_method == "empirical":
                thr = generalized_inverse(dist, p)
            else:
                thr = score_threshold(scores, p, cfg.quantile_method)
            outcome = None if tgt is None else bool(raw[tgt] > event_thr[p])
            issues.append(_Issue(label, h, p, bool(s_end >= thr), outcome, float(u)))
    return issues


_WORKER_STATE: dict = {}


def _init_worker(y, cfg):
    _WORKER_STATE["y"] = y
    _WORKER_STATE["cfg"] = cfg


def _run_window_pooled(window):
    return _run_window((_WORKER_STATE["y"], window, _WORKER_STATE["cfg"]))


def _run_window(args):
    y, window, cfg = args
    seg = y[window.train_start : window.train_end + 1]
    mean = float(seg.mean())
    centred = seg - mean
    marg = EmpiricalDistribution(np.sort(seg))
    event_thr = {p: generalized_inverse(marg, p) for p in cfg.levels}
    issues: List[_Issue] = []
    diag = {"window_start": window.train_start, "alpha_hat": None, "d_hat": None, "xi_hat": None}
    try:
        for m in cfg.models:
            if m.kind == "baseline":
                last = float(seg[-1])
                u = ecdf_eval(marg, last)
                for h in cfg.horizons:
                    tgt = window.targets[h]
                    for p in cfg.levels:
                        outcome = None if tgt is None else bool(y[tgt] > event_thr[p])
                        issues.append(_Issue(m.label, h, p, bool(last >= event_thr[p]), outcome, float(u)))
            elif m.kind == "ar":
                fit = fit_ar_ols(centred, m.order) if m.loss == "ols" else fit_ar_lad(centred, m.order)
                diag[f"{m.label}_phi1"] = float(fit.phi[0])
                diag[f"{m.label}_phi_sum"] = float(fit.phi.sum())
                wts = {h: ar_weights(fit, h) for h in cfg.horizons}
                issues += _linear_issues(m.label, wts, centred, y, window, cfg, event_thr)
            else:
                ff = fit_farima(centred)
                diag.update(alpha_hat=ff.alpha_hat, d_hat=ff.d_hat, xi_hat=ff.xi_hat)
                wts = {h: farima_weights(ff.d_hat, h, m.ell) for h in cfg.horizons}
                issues += _linear_issues(m.label, wts, centred, y, window, cfg, event_thr)
    except (TailcastError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return window, None, diag, f"{type(exc).__name__}: {exc}"
    return window, issues, diag, None


# ---------------------------------------------------------------- reports

@dataclass
class CellResult:
    model: str
    h: int
    p: float
    counts: ConfusionCounts
    n_pending: int
    u_hat: np.ndarray = field(repr=False)
    outcomes: np.ndarray = field(repr=False)
    window_index: np.ndarray = field(repr=False)

    @property
    def metrics(self):
        return sample_metrics(self.counts) if self.counts.total else None

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "model": self.model,
            "h": self.h,
            "p": self.p,
            "counts": self.counts.to_dict(),
            "n_predictions": self.counts.total,
            "n_pending": self.n_pending,
            "alarm_rate": None if m is None else m.alarm_rate,
            "metrics": None if m is None else m.to_dict(),
        }


@dataclass
class BacktestReport:
    cells: List[CellResult]
    diagnostics: List[dict]
    skipped: List[dict]
    provenance: dict

    def cell(self, model: str, h: int, p: float) -> CellResult:
        for c in self.cells:
            if c.model == model and c.h == h and math.isclose(c.p, p):
                return c
        raise KeyError((model, h, p))

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "results": [c.to_dict() for c in self.cells],
            "skipped_windows": self.skipped,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def data_hash(y: np.ndarray) -> str:
    arr = np.ascontiguousarray(np.asarray(y, dtype="<f8"))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def run_backtest(y, cfg: BacktestConfig) -> BacktestReport:
    """Fit, calibrate and score every window, then pool outcomes per cell.

    A window whose fit fails is skipped and logged. The run fails with
    ``BacktestError`` when the skipped fraction exceeds
    ``cfg.max_skip_fraction``.
    """
    arr = as_array(y)
    windows = enumerate_windows(arr.size, cfg)
    if cfg.n_jobs > 1:
        chunk = max(1, len(windows) // (4 * cfg.n_jobs))
        with ProcessPoolExecutor(cfg.n_jobs, initializer=_init_worker, initargs=(arr, cfg)) as ex:
            results = list(ex.map(_run_window_pooled, windows, chunksize=chunk))
    else:
        results = [_run_window((arr, w, cfg)) for w in windows]
    results.sort(key=lambda r: r[0].index)

    skipped = []
    diagnostics = []
    buckets: Dict[tuple, List[tuple]] = {}
    for window, issues, diag, err in results:
        if err is not None:
            log.warning("window %d (start %d) skipped: %s", window.index, window.train_start, err)
            skipped.append({"window_index": window.index, "window_start": window.train_start, "reason": err})
            continue
        diagnostics.append(diag)
        for it in issues:
            buckets.setdefault((it.model, it.h, it.p), []).append((window.index, it.alarm, it.outcome, it.u_hat))

    frac = len(skipped) / len(windows)
    if frac > cfg.max_skip_fraction:
        raise BacktestError(
            f"{len(skipped)} of {len(windows)} windows failed ({frac:.1%} > {cfg.max_skip_fraction:.0%})"
        )

    cells = []
    for m in cfg.models:
        for h in cfg.horizons:
            for p in cfg.levels:
                rows = buckets.get((m.label, h, p), [])
                done = [r for r in rows if r[2] is not None]
                al = np.array([r[1] for r in done], dtype=bool)
                oc = np.array([r[2] for r in done], dtype=bool)
                cells.append(
                    CellResult(
                        m.label,
                        h,
                        p,
                        tally_arrays(al, oc),
                        len(rows) - len(done),
                        np.array([r[3] for r in done], dtype=float),
                        oc,
                        np.array([r[0] for r in done], dtype=np.int64),
                    )
                )

    prov = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "config_sha256": cfg.config_hash(),
        "data_sha256": data_hash(arr),
        "data_length": int(arr.size),
        "seed": cfg.seed,
        "generator": RNG_NAME,
        "n_windows": len(windows),
        "n_skipped": len(skipped),
        "window_rule": cfg.window_rule,
    }
    return BacktestReport(cells, diagnostics, skipped, prov)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: BacktestReport, outdir: str) -> List[str]:
    """Write ``report.json``, ``confusion.csv``, ``diagnostics.csv`` and ``figure_data/``."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        fh.write(report.to_json())
    written.append(path)

    path = os.path.join(outdir, "confusion.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "h", "p", "tp", "fp", "fn", "tn", "precision", "tss", "alarm_rate"])
        for c in report.cells:
            m = c.metrics
            w.writerow(
                [c.model, c.h, _fmt(c.p), c.counts.tp, c.counts.fp, c.counts.fn, c.counts.tn]
                + ([_fmt(m.precision), _fmt(m.tss), _fmt(m.alarm_rate)] if m else ["", "", ""])
            )
    written.append(path)

    path = os.path.join(outdir, "diagnostics.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_start", "alpha_hat", "d_hat"])
        for d in report.diagnostics:
            w.writerow([d["window_start"], _fmt(d["alpha_hat"]), _fmt(d["d_hat"])])
    written.append(path)

    figdir = os.path.join(outdir, "figure_data")
    os.makedirs(figdir, exist_ok=True)
    for c in report.cells:
        if c.outcomes.size == 0 or c.outcomes.all() or not c.outcomes.any():
            continue
        stem = f"{c.model}_h{c.h}_p{c.p:g}"
        roc = roc_points(c.u_hat, c.outcomes)
        pr = pr_points(c.u_hat, c.outcomes)
        for name, curve, cols in (("roc", roc, ("fpr", "tpr")), ("pr", pr, ("recall", "precision"))):
            path = os.path.join(figdir, f"{name}_{stem}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(list(cols) + ["threshold"])
                for a, b, t in zip(curve.x, curve.y, curve.thresholds):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(t))])
            written.append(path)
    return written


# ---------------------------------------------------------------- ingest

def ingest(path, block_max: Optional[int] = None, max_missing: float = 0.5) -> Series:
    """Read a ``timestamp,value`` CSV, optionally block-max it, and fill gaps."""
    s = read_csv(path)
    if block_max:
        s = aggregate_block_max(s, int(block_max))
    frac = s.n_missing / len(s)
    if frac > max_missing:
        raise DataError(f"{path}: {frac:.1%} of values missing (limit {max_missing:.0%})")
    if s.n_missing:
        log.warning("%s: interpolating %d missing values (%.2f%%)", path, s.n_missing, 100 * frac)
        s = interpolate_missing(s)
    return s


__all__ = [
    "WINDOW_RULES",
    "ModelSpec",
    "BacktestConfig",
    "Window",
    "enumerate_windows",
    "window_count",
    "CellResult",
    "BacktestReport",
    "run_backtest",
    "write_report",
    "data_hash",
    "ingest",
]
