"""Calibrated exceedance predictors.

All time-series predictors here are linear filters: the score at time ``t``
is ``sum_r w_r (Y_{t-r} - center)`` and an alarm is raised when the score
clears a threshold calibrated on training scores. The alarm at ``t`` targets
the event ``Y_{t+h} > event_threshold``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .evt import extreme_quantile
from .exceptions import DomainError
from .linear import ArModel, companion_power, farima_ma_coeffs, finite_history_coeffs, invert_coeffs
from .series import EmpiricalDistribution, as_array, ecdf_eval, generalized_inverse

log = logging.getLogger(__name__)

QUANTILE_METHODS = ("empirical", "gp")


class DegenerateScoreWarning(UserWarning):
    """The filter weights vanish, so the scores carry no information."""


# ------------------------------------------------------------ static scorers

def density_ratio_score(f0: Callable, f1: Callable, x):
    """``f1(x) / f0(x)`` with ``c/0 = inf`` for ``c > 0`` and ``0/0 = 0``."""
    v0 = np.asarray(f0(x), dtype=float)
    v1 = np.asarray(f1(x), dtype=float)
    if np.any(v0 < 0) or np.any(v1 < 0):
        raise DomainError("density values must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(v0 > 0, v1 / np.where(v0 > 0, v0, 1.0), np.where(v1 > 0, np.inf, 0.0))
    return float(r) if r.ndim == 0 else r


def additive_model_score(g_value, sigma_value, y0: float):
    """Standardised distance ``(g - y0) / sigma`` of the regression to the threshold."""
    s = np.asarray(sigma_value, dtype=float)
    if np.any(s <= 0):
        raise DomainError("sigma must be positive")
    out = (np.asarray(g_value, dtype=float) - y0) / s
    return float(out) if out.ndim == 0 else out


def normal_scores(dist: EmpiricalDistribution, x):
    """``Phi^{-1}`` of the ECDF, clamped to ``[1/(n+1), n/(n+1)]``."""
    n = dist.n
    u = np.clip(ecdf_eval(dist, x), 1.0 / (n + 1), n / (n + 1.0))
    return norm.ppf(u)


def gaussian_copula_score(marginal_ecdfs: Sequence[EmpiricalDistribution], a, x):
    """``sum_i a_i Phi^{-1}(F_i(x_i))``; ``x`` may be a point or rows of points."""
    a = np.asarray(a, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    if pts.shape[1] != a.size or len(marginal_ecdfs) != a.size:
        raise DomainError("dimension mismatch between coefficients, marginals and points")
    z = np.column_stack([normal_scores(marginal_ecdfs[i], pts[:, i]) for i in range(a.size)])
    out = z @ a
    return float(out[0]) if x.ndim == 1 else out


def fit_copula_weights(X, y) -> Tuple[np.ndarray, List[EmpiricalDistribution]]:
    """Least-squares weights of the normal scores of ``y`` on those of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and X.shape[1] != 1:
        X = X.T
    y = np.asarray(y, dtype=float).ravel()
    margs = [EmpiricalDistribution(np.sort(X[:, i])) for i in range(X.shape[1])]
    Z = np.column_stack([normal_scores(m, X[:, i]) for i, m in enumerate(margs)])
    zy = normal_scores(EmpiricalDistribution(np.sort(y)), y)
    w = np.linalg.lstsq(Z, zy, rcond=None)[0]
    return w, margs


# -------------------------------------------------------- linear predictors

@dataclass(frozen=True)
class CalibratedPredictor:
    """A thresholded linear filter.

    ``weights[r]`` multiplies ``Y_{t-r} - center``. ``threshold`` is on the
    score scale; ``event_threshold`` is in raw units and defines the
    target event ``Y_{t+h} > event_threshold``.
    """

    weights: np.ndarray
    threshold: float
    level_q: Optional[float]
    horizon_h: int
    comparison: str = ">="
    center: float = 0.0
    event_threshold: Optional[float] = None
    kind: str = "linear"
    quantile_method: str = "empirical"
    degenerate: bool = False
    train_range: Optional[Tuple[int, int]] = None
    n_train_scores: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise DomainError("predictor needs at least one weight")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.comparison not in (">", ">="):
            raise DomainError(f"comparison must be '>' or '>=', got {self.comparison!r}")
        if int(self.horizon_h) != self.horizon_h or self.horizon_h < 1:
            raise DomainError(f"horizon must be an integer >= 1, got {self.horizon_h!r}")

    @property
    def history(self) -> int:
        return int(self.weights.size)

    def scores(self, y) -> np.ndarray:
        """Scores at every time with a full history: ``t = L-1, ..., n-1``."""
        x = np.asarray(as_array(y), dtype=float) - self.center
        if x.size < self.history:
            return np.empty(0)
        return np.convolve(x, self.weights, mode="valid")

    def alarm(self, score):
        s = np.asarray(score, dtype=float)
        return s >= self.threshold if self.comparison == ">=" else s > self.threshold

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "horizon_h": int(self.horizon_h),
            "level_q": None if self.level_q is None else float(self.level_q),
            "threshold": float(self.threshold),
            "event_threshold": None if self.event_threshold is None else float(self.event_threshold),
            "comparison": self.comparison,
            "center": float(self.center),
            "quantile_method": self.quantile_method,
            "degenerate": bool(self.degenerate),
            "weights": [float(v) for v in self.weights],
        }


def _check_level(p):
    if not 0 < p < 1:
        raise DomainError(f"level must lie in (0, 1), got {p}")


def score_threshold(scores: np.ndarray, p: float, method: str = "empirical") -> float:
    """Calibration threshold from training scores."""
    _check_level(p)
    if method == "empirical":
        return generalized_inverse(EmpiricalDistribution(np.sort(scores)), p)
    if method == "gp":
        return extreme_quantile(scores, p)
    raise DomainError(f"unknown quantile method {method!r}; choose from {QUANTILE_METHODS}")


def marginal_threshold(y, p: float) -> float:
    """``F^<-(p)`` of the raw observations."""
    _check_level(p)
    return generalized_inverse(EmpiricalDistribution(np.sort(as_array(y))), p)


def calibrate_linear(
    weights,
    h: int,
    train,
    p: float,
    *,
    center: float = 0.0,
    quantile_method: str = "empirical",
    event_threshold: Optional[float] = None,
    kind: str = "linear",
    degenerate: bool = False,
    train_range: Optional[Tuple[int, int]] = None,
) -> CalibratedPredictor:
    """Fix the threshold at the ``p``-quantile of the filter's training scores.

    ``event_threshold`` defaults to the ``p``-quantile of the raw training values.
    """
    _check_level(p)
    x = as_array(train)
    proto = CalibratedPredictor(weights, 0.0, p, h, ">=", center)
    s = proto.scores(x)
    if s.size == 0:
        raise DomainError(f"training series shorter than the filter history {proto.history}")
    thr = score_threshold(s, p, quantile_method)
    ev = marginal_threshold(x, p) if event_threshold is None else float(event_threshold)
    return replace(
        proto,
        threshold=float(thr),
        event_threshold=ev,
        kind=kind,
        quantile_method=quantile_method,
        degenerate=degenerate,
        train_range=train_range,
        n_train_scores=int(s.size),
    )


def baseline_predictor(y0: float, h: int, event_threshold: Optional[float] = None) -> CalibratedPredictor:
    """Alarm whenever the latest observation reaches ``y0``."""
    ev = y0 if event_threshold is None else event_threshold
    return CalibratedPredictor(
        np.array([1.0]), float(y0), None, h, ">=", 0.0, float(ev), "baseline", "none"
    )


def ar_weights(model, h: int) -> np.ndarray:
    phi = model.phi if isinstance(model, ArModel) else np.asarray(model, dtype=float)
    return companion_power(phi, h).phi_h


def ar_predictor(model, h: int, train, p: float, **kw) -> CalibratedPredictor:
    """Plug-in AR predictor: score ``phi(h).(Y_t, ..., Y_{t-d+1})``."""
    kw.setdefault("kind", "ar")
    return calibrate_linear(ar_weights(model, h), h, train, p, **kw)


def farima_weights(d_hat: float, h: int, ell: int) -> np.ndarray:
    """Finite-history coefficients ``c_0..c_{ell-1}`` of the FARIMA(0,d,0) optimum."""
    a = farima_ma_coeffs(d_hat, ell + h)
    b = invert_coeffs(a, ell)
    return finite_history_coeffs(a, b, h, ell)


def farima_predictor(d_hat: float, alpha_hat: float, h: int, ell: int, train, p: float, **kw) -> CalibratedPredictor:
    """Truncated FARIMA predictor of history ``ell``."""
    if not 1 < alpha_hat < 2:
        raise DomainError(f"alpha_hat must lie in (1, 2), got {alpha_hat}")
    if not -0.5 < d_hat < 1 - 1 / alpha_hat:
        raise DomainError(f"d_hat={d_hat} outside (-1/2, 1 - 1/alpha_hat)")
    x = as_array(train)
    if ell > x.size:
        raise DomainError(f"history {ell} exceeds training length {x.size}")
    c = farima_weights(d_hat, h, ell)
    degenerate = bool(np.max(np.abs(c)) < 1e-12)
    if degenerate:
        warnings.warn("FARIMA weights vanish (d_hat ~ 0); scores are uninformative", DegenerateScoreWarning, stacklevel=2)
    kw.setdefault("kind", "farima")
    return calibrate_linear(c, h, x, p, degenerate=degenerate, **kw)


# ---------------------------------------------------------------- scoring

@dataclass(frozen=True)
class PredictionRecord:
    t: int
    score: float
    alarm: bool
    outcome: Optional[bool]  # None while Y_{t+h} is unobserved


@dataclass(frozen=True)
class PathPredictions:
    times: np.ndarray
    scores: np.ndarray
    alarms: np.ndarray
    outcomes: np.ndarray
    resolved: np.ndarray

    def records(self) -> List[PredictionRecord]:
        return [
            PredictionRecord(int(t), float(s), bool(a), bool(o) if r else None)
            for t, s, a, o, r in zip(self.times, self.scores, self.alarms, self.outcomes, self.resolved)
        ]


def predict_arrays(pred: CalibratedPredictor, y) -> PathPredictions:
    """Vectorised scoring of a whole path."""
    x = as_array(y)
    s = pred.scores(x)
    times = np.arange(pred.history - 1, pred.history - 1 + s.size)
    tgt = times + pred.horizon_h
    resolved = tgt < x.size
    if pred.event_threshold is None:
        resolved = np.zeros_like(resolved)
    outcomes = np.zeros(s.size, dtype=bool)
    if resolved.any():
        outcomes[resolved] = x[tgt[resolved]] > pred.event_threshold
    return PathPredictions(times, s, pred.alarm(s), outcomes, resolved)


def predict_path(pred: CalibratedPredictor, y) -> List[PredictionRecord]:
    """One record per time with a full history; tail records stay pending."""
    return predict_arrays(pred, y).records()


__all__ = [
    "QUANTILE_METHODS",
    "DegenerateScoreWarning",
    "density_ratio_score",
    "additive_model_score",
    "normal_scores",
    "gaussian_copula_score",
    "fit_copula_weights",
    "CalibratedPredictor",
    "score_threshold",
    "marginal_threshold",
    "calibrate_linear",
    "baseline_predictor",
    "ar_weights",
    "ar_predictor",
    "farima_weights",
    "farima_predictor",
    "PredictionRecord",
    "PathPredictions",
    "predict_arrays",
    "predict_path",
]
