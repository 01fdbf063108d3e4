"""Confusion counts, skill scores and ROC/PR curves.

Undefined scores (zero denominators, logs of 0) are ``None``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import DataError, DomainError

METRIC_NAMES = ("precision", "tpr", "fpr", "tss", "hss", "f1", "edi")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for k in ("tp", "fp", "fn", "tn"):
            v = getattr(self, k)
            if int(v) != v or v < 0:
                raise DomainError(f"{k} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, k, int(v))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> dict:
        return asdict(self)


def tally_arrays(alarms, outcomes) -> ConfusionCounts:
    a = np.asarray(alarms, dtype=bool).ravel()
    o = np.asarray(outcomes, dtype=bool).ravel()
    if a.shape != o.shape:
        raise DomainError("alarms and outcomes differ in length")
    tp = int(np.count_nonzero(a & o))
    fp = int(np.count_nonzero(a & ~o))
    fn = int(np.count_nonzero(~a & o))
    return ConfusionCounts(tp, fp, fn, a.size - tp - fp - fn)


def tally(records: Iterable) -> ConfusionCounts:
    """Count outcomes over prediction records; every outcome must be resolved."""
    recs = list(records)
    if any(r.outcome is None for r in recs):
        raise DataError("cannot tally records with pending outcomes")
    return tally_arrays([r.alarm for r in recs], [r.outcome for r in recs])


def _ratio(num: float, den: float) -> Optional[float]:
    return None if den == 0 else num / den


def _edi(fpr: Optional[float], tpr: Optional[float]) -> Optional[float]:
    if fpr is None or tpr is None or fpr <= 0 or tpr <= 0:
        return None
    lf, lt = math.log(fpr), math.log(tpr)
    den = lf + lt
    return None if den == 0 else (lf - lt) / den


@dataclass(frozen=True)
class SkillReport:
    precision: Optional[float]
    tpr: Optional[float]
    fpr: Optional[float]
    tss: Optional[float]
    hss: Optional[float]
    f1: Optional[float]
    edi: Optional[float]
    alarm_rate: Optional[float]
    event_rate: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def sample_metrics(c: ConfusionCounts) -> SkillReport:
    n = c.total
    if n == 0:
        raise DomainError("metrics need at least one record")
    tp, fp, fn, tn = c.tp, c.fp, c.fn, c.tn
    precision = _ratio(tp, tp + fp)
    tpr = _ratio(tp, tp + fn)
    fpr = _ratio(fp, fp + tn)
    tss = None if tpr is None or fpr is None else tpr - fpr
    hss = _ratio(2.0 * (tp * tn - fp * fn), (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn))
    f1 = _ratio(2.0 * tp, 2 * tp + fp + fn)
    return SkillReport(
        precision, tpr, fpr, tss, hss, f1, _edi(fpr, tpr), (tp + fp) / n, (tp + fn) / n
    )


def lambda_bounds(p: float, q: float):
    """Range of precisions compatible with event level ``p`` and alarm level ``q``."""
    lo = max((1 - p - q) / (1 - q), 0.0)
    hi = min((1 - p) / (1 - q), 1.0)
    return lo, hi


def population_metrics(p: float, q: float, lam: float) -> SkillReport:
    """Skill scores of a predictor with alarm rate ``1-q``, event rate ``1-p`` and precision ``lam``."""
    if not (0 < p < 1 and 0 < q < 1):
        raise DomainError("p and q must lie in (0, 1)")
    lo, hi = lambda_bounds(p, q)
    if not (lo - 1e-15 <= lam <= hi + 1e-15):
        raise DomainError(
            f"lambda={lam} infeasible: need max((1-p-q)/(1-q), 0) = {lo:.6g} <= lambda <= "
            f"min((1-p)/(1-q), 1) = {hi:.6g}"
        )
    tpr = (1 - q) * lam / (1 - p)
    fpr = (1 - q) * (1 - lam) / p
    tss = (1 - q) * (lam + p - 1) / (p * (1 - p))
    hss = 2 * (1 - q) * (lam + p - 1) / (p + q - 2 * p * q)
    f1 = 2 * (1 - q) * lam / (2 - p - q)
    return SkillReport(lam, tpr, fpr, tss, hss, f1, _edi(fpr, tpr), 1 - q, 1 - p)


def joint_probabilities(p: float, q: float, lam: float) -> np.ndarray:
    """Cell probabilities ``(tp, fp, fn, tn)`` of the alarm/event table."""
    population_metrics(p, q, lam)
    return np.array([(1 - q) * lam, (1 - q) * (1 - lam), 1 - p - (1 - q) * lam, p - (1 - q) * (1 - lam)])


# ------------------------------------------------------------------ curves

@dataclass(frozen=True)
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray  # alarm iff score > threshold


def _sweep(scores, outcomes, need_negatives=True):
    s = np.asarray(scores, dtype=float).ravel()
    o = np.asarray(outcomes, dtype=bool).ravel()
    if s.shape != o.shape:
        raise DomainError("scores and outcomes differ in length")
    npos = int(o.sum())
    nneg = o.size - npos
    if npos == 0 or (need_negatives and nneg == 0):
        raise DomainError("curve needs both positive and negative outcomes" if need_negatives else "curve needs a positive outcome")
    order = np.argsort(-s, kind="stable")
    s, o = s[order], o[order]
    # Last index of each group of tied scores.
    ends = np.nonzero(np.r_[s[1:] != s[:-1], True])[0]
    tp = np.cumsum(o)[ends]
    fp = (ends + 1) - tp
    uniq = s[ends]
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    top = uniq[0] + max(1.0, abs(uniq[0]))
    bottom = uniq[-1] - max(1.0, abs(uniq[-1]))
    thr = np.concatenate([[top], mids, [bottom]])
    return tp, fp, npos, nneg, thr


def roc_points(scores, outcomes) -> Curve:
    """ROC curve: one point per distinct score, plus ``(0, 0)``."""
    tp, fp, npos, nneg, thr = _sweep(scores, outcomes)
    x = np.concatenate([[0.0], fp / nneg])
    y = np.concatenate([[0.0], tp / npos])
    return Curve(x, y, thr)


def pr_points(scores, outcomes) -> Curve:
    """Recall/precision pairs; the zero-alarm threshold is omitted.

    Only positives are required: with no negatives precision is 1 throughout.
    """
    tp, fp, npos, nneg, thr = _sweep(scores, outcomes, need_negatives=False)
    return Curve(tp / npos, tp / (tp + fp), thr[1:])


def auc(curve: Curve) -> float:
    return float(trapezoid(curve.y, curve.x))


__all__ = [
    "METRIC_NAMES",
    "ConfusionCounts",
    "SkillReport",
    "tally",
    "tally_arrays",
    "sample_metrics",
    "lambda_bounds",
    "population_metrics",
    "joint_probabilities",
    "Curve",
    "roc_points",
    "pr_points",
    "auc",
]
