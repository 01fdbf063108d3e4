"""Extreme-value estimators and the spectral memory estimator.

Shape convention throughout: ``xi > 0`` is the heavy (Frechet) tail, so a
regularly varying variable with index ``alpha`` has ``xi = 1/alpha``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize, minimize_scalar
from scipy.signal import czt
from scipy.special import gamma as gamma_fn
from scipy.stats import kstest

from .exceptions import DataError, DomainError, FitError
from .series import EmpiricalDistribution, as_array, ecdf_eval, generalized_inverse

log = logging.getLogger(__name__)

_GUMBEL_EPS = 1e-8
ALPHA_CLIP = (1.01, 1.99)


@dataclass(frozen=True)
class GevParams:
    mu: float
    sigma: float
    xi: float

    @property
    def alpha(self) -> float:
        """Tail index ``1/xi`` (infinite for non-positive shape)."""
        return 1.0 / self.xi if self.xi > 0 else math.inf


@dataclass(frozen=True)
class GpParams:
    sigma: float
    xi: float
    mu: float = 0.0


@dataclass(frozen=True)
class Periodogram:
    freqs: np.ndarray
    power: np.ndarray

    @property
    def M(self) -> int:
        return int(self.freqs.size)


# ---------------------------------------------------------------- GEV

def gev_nll(params, z) -> float:
    """Negative log-likelihood at ``(mu, log sigma, xi)``; ``inf`` off-support."""
    mu, ls, xi = params
    s = math.exp(ls)
    w = (np.asarray(z) - mu) / s
    n = w.size
    if abs(xi) < _GUMBEL_EPS:
        return n * ls + float(w.sum()) + float(np.exp(-w).sum())
    t = 1.0 + xi * w
    if np.any(t <= 0):
        return math.inf
    lt = np.log(t)
    return n * ls + (1.0 + 1.0 / xi) * float(lt.sum()) + float(np.exp(-lt / xi).sum())


def gev_cdf(z, p: GevParams):
    w = (np.asarray(z, dtype=float) - p.mu) / p.sigma
    if abs(p.xi) < _GUMBEL_EPS:
        return np.exp(-np.exp(-w))
    t = np.maximum(1.0 + p.xi * w, 0.0)
    with np.errstate(divide="ignore"):
        return np.exp(-(t ** (-1.0 / p.xi)))


def gev_ppf(u, p: GevParams):
    u = np.asarray(u, dtype=float)
    y = -np.log(u)
    if abs(p.xi) < _GUMBEL_EPS:
        return p.mu - p.sigma * np.log(y)
    return p.mu + p.sigma * (y ** (-p.xi) - 1.0) / p.xi


def _pwm(x_sorted: np.ndarray):
    n = x_sorted.size
    i = np.arange(n, dtype=float)
    b0 = x_sorted.mean()
    b1 = float((i / (n - 1) * x_sorted).sum() / n)
    b2 = float((i * (i - 1) / ((n - 1) * (n - 2)) * x_sorted).sum() / n)
    return b0, b1, b2


def _gev_start(z: np.ndarray):
    b0, b1, b2 = _pwm(np.sort(z))
    denom = 3 * b2 - b0
    c = (2 * b1 - b0) / denom - math.log(2) / math.log(3) if denom != 0 else 0.0
    k = 7.8590 * c + 2.9554 * c * c  # Hosking's k equals -xi
    k = float(np.clip(k, -0.95, 0.95))
    if abs(k) < 1e-6:
        sig = (2 * b1 - b0) / math.log(2)
        mu = b0 - 0.5772156649 * sig
    else:
        g = gamma_fn(1 + k)
        sig = (2 * b1 - b0) * k / (g * (1 - 2.0 ** (-k)))
        mu = b0 + sig * (g - 1) / k
    sig = max(sig, 1e-3 * (np.std(z) + 1e-12))
    start = np.array([mu, math.log(sig), -k])
    # Shrink the shape toward zero until the start is on the support.
    for _ in range(60):
        if math.isfinite(gev_nll(start, z)):
            break
        start[2] *= 0.5
        start[1] += 0.1
    return start


def _nelder_mead(fun, x0, z):
    opts = {"xatol": 1e-8, "fatol": 1e-10, "maxiter": 20000, "maxfev": 40000}
    res = minimize(fun, x0, args=(z,), method="Nelder-Mead", options=opts)
    # A restart from the optimum guards against simplex collapse.
    res2 = minimize(fun, res.x, args=(z,), method="Nelder-Mead", options=opts)
    return res2 if res2.fun <= res.fun else res


def fit_gev(block_maxima) -> GevParams:
    """Maximum-likelihood GEV fit, Nelder-Mead from a PWM start."""
    z = as_array(block_maxima)
    if z.size < 50:
        raise DomainError(f"GEV fit needs at least 50 values, got {z.size}")
    loc = float(np.median(z))
    scale = float(np.subtract(*np.percentile(z, [75, 25])))
    if not scale > 0:
        scale = float(np.std(z))
    if not scale > 0:
        raise FitError("GEV fit on constant data")
    zs = (z - loc) / scale
    x0 = _gev_start(zs)
    f0 = gev_nll(x0, zs)
    if not math.isfinite(f0):
        raise FitError("could not find a feasible GEV starting point", diagnostics={"start": x0.tolist()})
    res = _nelder_mead(gev_nll, x0, zs)
    diag = {"nit": int(res.nit), "nll": float(res.fun), "message": str(res.message)}
    if not res.success:
        raise FitError("GEV likelihood optimisation did not converge", best=res.x, diagnostics=diag)
    if not math.isfinite(res.fun):
        raise FitError("GEV optimum violates the support constraint", best=res.x, diagnostics=diag)
    mu, ls, xi = res.x
    return GevParams(loc + scale * mu, scale * math.exp(ls), float(xi))


def gev_loglik(z, p: GevParams) -> float:
    return -gev_nll([p.mu, math.log(p.sigma), p.xi], as_array(z))


# ----------------------------------------------------------------- GP

def gp_nll(params, x) -> float:
    """Negative log-likelihood at ``(log sigma, xi)`` for excesses ``x >= 0``."""
    ls, xi = params
    s = math.exp(ls)
    n = x.size
    if abs(xi) < _GUMBEL_EPS:
        return n * ls + float(x.sum()) / s
    t = 1.0 + xi * x / s
    if np.any(t <= 0):
        return math.inf
    return n * ls + (1.0 + 1.0 / xi) * float(np.log(t).sum())


def gp_cdf(x, p: GpParams):
    w = np.maximum((np.asarray(x, dtype=float) - p.mu) / p.sigma, 0.0)
    if abs(p.xi) < _GUMBEL_EPS:
        return 1.0 - np.exp(-w)
    t = np.maximum(1.0 + p.xi * w, 0.0)
    with np.errstate(divide="ignore"):
        return 1.0 - t ** (-1.0 / p.xi)


def gp_ppf(u, p: GpParams):
    u = np.asarray(u, dtype=float)
    if abs(p.xi) < _GUMBEL_EPS:
        return p.mu - p.sigma * np.log1p(-u)
    return p.mu + p.sigma * ((1.0 - u) ** (-p.xi) - 1.0) / p.xi


def fit_gp(excesses) -> GpParams:
    """Maximum-likelihood generalized Pareto fit with location fixed at 0."""
    x = as_array(excesses)
    if x.size < 20:
        raise DomainError(f"GP fit needs at least 20 excesses, got {x.size}")
    if np.any(x < 0):
        raise DomainError("excesses must be non-negative")
    if np.ptp(x) == 0:
        raise FitError("GP likelihood is degenerate for a single repeated value")
    scale = float(x.mean())
    xs = x / scale
    xsorted = np.sort(xs)
    n = xs.size
    a0 = float(xsorted.mean())
    a1 = float(((n - 1 - np.arange(n)) / (n - 1) * xsorted).sum() / n)
    den = a0 - 2 * a1
    if den > 0:
        xi0 = -(a0 / den - 2.0)
        sig0 = 2 * a0 * a1 / den
    else:
        xi0, sig0 = 0.5, a0
    xi0 = float(np.clip(xi0, -0.5, 0.9))
    sig0 = max(sig0, 1e-6)
    if xi0 < 0:
        sig0 = max(sig0, -xi0 * xsorted[-1] * 1.01)
    x0 = np.array([math.log(sig0), xi0])
    res = _nelder_mead(gp_nll, x0, xs)
    diag = {"nit": int(res.nit), "nll": float(res.fun), "message": str(res.message)}
    if not res.success or not math.isfinite(res.fun):
        raise FitError("GP likelihood optimisation did not converge", best=res.x, diagnostics=diag)
    ls, xi = res.x
    return GpParams(scale * math.exp(ls), float(xi))


def gp_loglik(x, p: GpParams) -> float:
    return -gp_nll([math.log(p.sigma), p.xi], as_array(x) - p.mu)


# ---------------------------------------------------------- declustering

def extremal_index_intervals(times) -> float:
    """Intervals estimator of the extremal index, capped at 1."""
    s = np.asarray(times, dtype=np.int64).ravel()
    if s.size < 2:
        return 1.0
    t = np.diff(s).astype(float)
    m = t.size
    if t.max() <= 2:
        theta = 2.0 * t.sum() ** 2 / (m * (t * t).sum())
    else:
        num = 2.0 * (t - 1).sum() ** 2
        den = m * ((t - 1) * (t - 2)).sum()
        theta = num / den
    return float(min(1.0, theta))


def decluster_intervals(exceedance_times, n_total: Optional[int] = None) -> List[np.ndarray]:
    """Group exceedance times into clusters by the intervals method.

    With ``C = ceil(theta * N)`` clusters targeted, the series of exceedances
    is cut at its ``C - 1`` largest inter-exceedance gaps. Consecutive
    exceedances (gap 1) are never separated, so fewer clusters can result.
    Ties among gaps favour the earliest one.
    """
    s = np.asarray(exceedance_times, dtype=np.int64).ravel()
    if s.size and np.any(np.diff(s) <= 0):
        raise DomainError("exceedance times must be strictly increasing")
    if n_total is not None and s.size and (s[0] < 0 or s[-1] >= n_total):
        raise DomainError("exceedance times outside [0, n_total)")
    if s.size < 2:
        return [s.copy()] if s.size else []
    theta = extremal_index_intervals(s)
    n_clusters = min(s.size, max(1, math.ceil(theta * s.size - 1e-12)))
    gaps = np.diff(s)
    order = np.argsort(-gaps, kind="stable")
    order = order[gaps[order] > 1][: n_clusters - 1]
    cuts = np.sort(order) + 1
    return np.split(s, cuts)


# ------------------------------------------------------ extreme quantile

@dataclass(frozen=True)
class ThresholdChoice:
    tau: float
    p0: float
    gp: GpParams
    ks: float
    n_clusters: int


def _candidate(scores, tau):
    times = np.nonzero(scores > tau)[0]
    if times.size < 2:
        return None
    clusters = decluster_intervals(times, scores.size)
    peaks = np.array([scores[c].max() for c in clusters]) - tau
    if peaks.size < 20 or np.ptp(peaks) == 0:
        return None
    gp = fit_gp(peaks)
    ks = float(kstest(peaks, lambda x: gp_cdf(x, gp)).statistic)
    return gp, ks, peaks.size


def select_threshold(scores, n_candidates: int = 10) -> ThresholdChoice:
    """Scan thresholds between the upper quartile and the tenth-largest value.

    Picks the smallest Kolmogorov-Smirnov distance between the declustered
    excesses and their fitted GP, breaking ties toward the lower threshold.
    """
    x = as_array(scores)
    if x.size < 200:
        raise DomainError(f"threshold selection needs at least 200 scores, got {x.size}")
    dist = EmpiricalDistribution(np.sort(x))
    lo = generalized_inverse(dist, 0.75)
    hi = float(dist.sorted_values[-10])
    best = None
    failures = []
    for tau in np.linspace(lo, hi, n_candidates):
        try:
            got = _candidate(x, float(tau))
        except (FitError, DomainError) as exc:
            failures.append(f"{tau:.6g}: {exc}")
            continue
        if got is None:
            failures.append(f"{tau:.6g}: too few clusters")
            continue
        gp, ks, nc = got
        if best is None or ks < best.ks:
            best = ThresholdChoice(float(tau), ecdf_eval(dist, tau), gp, ks, nc)
    if best is None:
        raise FitError("GP fit failed at every candidate threshold", diagnostics={"failures": failures})
    return best


def extreme_quantile(scores, p: float, choice: Optional[ThresholdChoice] = None) -> float:
    """GP-based estimate of the ``p``-quantile of ``scores``.

    Falls back to the empirical quantile when ``p`` does not exceed the
    sub-threshold mass of the selected threshold.
    """
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    x = as_array(scores)
    if choice is None:
        choice = select_threshold(x)
    if p <= choice.p0:
        return generalized_inverse(EmpiricalDistribution(np.sort(x)), p)
    u = (p - choice.p0) / (1.0 - choice.p0)
    return float(choice.tau + gp_ppf(u, choice.gp))


# ---------------------------------------------------- spectral estimation

def periodogram(y, M: Optional[int] = None) -> Periodogram:
    """``I(l) = |sum_j y_j exp(-i l j)|^2`` on ``l_k = pi k / M``, ``k = 1..M``.

    Defaults to ``M = n``. When ``2M < n`` the sum is folded modulo ``2M``
    first, which is exact because the exponentials are ``2M``-periodic.
    """
    x = as_array(y)
    n = x.size
    if n == 0:
        raise DataError("periodogram of an empty series")
    M = n if M is None else int(M)
    if M < 1:
        raise DomainError("M must be >= 1")
    L = 2 * M
    if L < n:
        pad = (-n) % L
        x = np.concatenate([x, np.zeros(pad)]).reshape(-1, L).sum(axis=0)
    spec = np.fft.fft(x, L)[1 : M + 1]
    freqs = np.pi * np.arange(1, M + 1) / M
    return Periodogram(freqs, (spec.real ** 2 + spec.imag ** 2))


def periodogram_at(y, freqs_start: float, freqs_stop: float, num: int) -> Periodogram:
    """Periodogram on an arbitrary equispaced grid via the chirp z-transform."""
    x = as_array(y)
    if num < 2:
        raise DomainError("need at least two frequencies")
    step = (freqs_stop - freqs_start) / (num - 1)
    w = np.exp(-1j * step)
    a = np.exp(1j * freqs_start)
    spec = czt(x, m=num, w=w, a=a)
    freqs = freqs_start + step * np.arange(num)
    return Periodogram(freqs, spec.real ** 2 + spec.imag ** 2)


def whittle_objective(pg: Periodogram, d: float) -> float:
    lam = pg.freqs
    return float(trapezoid((2.0 - 2.0 * np.cos(lam)) ** d * pg.power, lam))


def estimate_d(y, alpha_hat: float, n_quad: int = 2048, tol: float = 1e-4) -> float:
    """Memory parameter minimising ``int (2 - 2 cos l)^d I(l) dl`` over ``[1/n, pi]``.

    The integrand is a positive mixture of exponentials in ``d``, so the
    objective is convex and a bounded scalar search finds the minimiser on
    ``(-1/2, 1 - 1/alpha_hat - 1e-3)``.
    """
    if not 1 < alpha_hat < 2:
        raise DomainError(f"alpha_hat must lie in (1, 2), got {alpha_hat}")
    x = as_array(y)
    n = x.size
    if n < 2:
        raise DataError("need at least two observations")
    pg = periodogram_at(x, 1.0 / n, math.pi, n_quad)
    if not np.any(pg.power > 0):
        raise DataError("periodogram is identically zero")
    lo, hi = -0.5, 1.0 - 1.0 / alpha_hat - 1e-3
    res = minimize_scalar(
        lambda d: whittle_objective(pg, d), bounds=(lo, hi), method="bounded", options={"xatol": tol}
    )
    return float(res.x)


@dataclass(frozen=True)
class FarimaFit:
    xi_hat: float
    alpha_hat: float
    alpha_raw: float
    d_hat: float
    n: int
    gev: GevParams

    def to_dict(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "xi_hat": self.xi_hat, "d_hat": self.d_hat, "n": self.n}


def fit_farima(y) -> FarimaFit:
    """Tail index from a GEV fit to the observations, then the spectral ``d``.

    The raw ``1/xi`` is clipped into ``[1.01, 1.99]`` so that the memory
    search interval is non-empty.
    """
    x = as_array(y)
    gev = fit_gev(x)
    raw = gev.alpha
    alpha = float(np.clip(raw, *ALPHA_CLIP))
    if alpha != raw:
        log.info("clipping alpha_hat %.4g into [%.2f, %.2f]", raw, *ALPHA_CLIP)
    d = estimate_d(x, alpha)
    return FarimaFit(gev.xi, alpha, raw, d, x.size, gev)


__all__ = [
    "GevParams",
    "GpParams",
    "Periodogram",
    "ThresholdChoice",
    "FarimaFit",
    "gev_nll",
    "gev_cdf",
    "gev_ppf",
    "gev_loglik",
    "fit_gev",
    "gp_nll",
    "gp_cdf",
    "gp_ppf",
    "gp_loglik",
    "fit_gp",
    "extremal_index_intervals",
    "decluster_intervals",
    "select_threshold",
    "extreme_quantile",
    "periodogram",
    "periodogram_at",
    "whittle_objective",
    "estimate_d",
    "fit_farima",
]
