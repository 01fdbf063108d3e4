"""Tail-dependence calculus for linear processes with regularly varying innovations.

Every coefficient sequence ``b`` stands for the variable
``xi(b) = sum_j b_j eps_{-j}``, where the innovations have tail index
``alpha`` and extremal skewness ``p_eps``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import DegenerateLambdaWarning, DomainError
from .linear import coeff_array, farima_ma_coeffs
from .series import EmpiricalDistribution, generalized_inverse

_REL_TOL = 1e-12


@dataclass(frozen=True)
class RegVarSpec:
    alpha: float
    p_eps: float = 0.5

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.p_eps <= 1.0:
            raise DomainError(f"p_eps must lie in [0, 1], got {self.p_eps}")


def kappa_plus(spec: RegVarSpec, b):
    b = np.asarray(b, dtype=float)
    out = spec.p_eps * (b > 0) + (1.0 - spec.p_eps) * (b < 0)
    return float(out) if out.ndim == 0 else out


def kappa_minus(spec: RegVarSpec, b):
    b = np.asarray(b, dtype=float)
    out = spec.p_eps * (b < 0) + (1.0 - spec.p_eps) * (b > 0)
    return float(out) if out.ndim == 0 else out


def kappa_pp(spec: RegVarSpec, a, b):
    """Joint weight for both coefficients being large in the positive direction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = spec.p_eps * ((a > 0) & (b > 0)) + (1.0 - spec.p_eps) * ((a < 0) & (b < 0))
    return float(out) if out.ndim == 0 else out


def eta_norm(spec: RegVarSpec, b, h: int = 0, sign: str = "+") -> float:
    """``sum_{j >= h} kappa_sign(b_j) |b_j|^alpha`` over the stored coefficients."""
    arr = coeff_array(b)
    if int(h) != h or h < 0:
        raise DomainError(f"start index must be a non-negative integer, got {h!r}")
    tail = arr[int(h):]
    if sign == "+":
        k = kappa_plus(spec, tail)
    elif sign == "-":
        k = kappa_minus(spec, tail)
    else:
        raise DomainError(f"sign must be '+' or '-', got {sign!r}")
    return float(np.sum(k * np.abs(tail) ** spec.alpha))


def extremal_skewness(spec: RegVarSpec, b) -> float:
    arr = coeff_array(b)
    total = float(np.sum(np.abs(arr) ** spec.alpha))
    if total == 0:
        raise DomainError("extremal skewness undefined for an all-zero sequence")
    return eta_norm(spec, arr, 0, "+") / total


def _pad(a: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([a, np.zeros(n - a.size)]) if a.size < n else a


def tail_dependence(spec: RegVarSpec, a, b) -> float:
    """Upper tail-dependence coefficient between ``xi(a)`` and ``xi(b)``."""
    a = coeff_array(a)
    b = coeff_array(b)
    n = max(a.size, b.size)
    a, b = _pad(a, n), _pad(b, n)
    ea = eta_norm(spec, a, 0, "+")
    eb = eta_norm(spec, b, 0, "+")
    if ea == 0 or eb == 0:
        raise DomainError("tail dependence requires positive extremal skewness on both sides")
    al = spec.alpha
    w = np.minimum(np.abs(a) ** al / ea, np.abs(b) ** al / eb)
    return float(min(1.0, np.sum(kappa_pp(spec, a, b) * w)))


@dataclass(frozen=True)
class LambdaOpt:
    value: float
    eta_h: float
    eta_0: float
    degenerate: bool
    K: int


def lambda_opt_info(spec: RegVarSpec, a, h: int, eta_tail: float = 0.0) -> LambdaOpt:
    """Optimal extremal precision with its ingredients.

    ``eta_tail`` is an estimate of the positive-part mass beyond the stored
    coefficients; it is added to both sums.
    """
    if int(h) != h or h < 1:
        raise DomainError(f"horizon must be an integer >= 1, got {h!r}")
    arr = coeff_array(a)
    e0 = eta_norm(spec, arr, 0, "+") + eta_tail
    if e0 == 0:
        raise DomainError("eta_+(a, 0) is zero; optimal precision undefined")
    eh = eta_norm(spec, arr, int(h), "+") + eta_tail
    if eh == 0:
        return LambdaOpt(0.0, 0.0, e0, True, arr.size)
    return LambdaOpt(min(1.0, eh / e0), eh, e0, False, arr.size)


def lambda_opt_ma(spec: RegVarSpec, a, h: int) -> float:
    """``eta_+(a, h) / eta_+(a, 0)``; zero, with a warning, when the numerator vanishes."""
    info = lambda_opt_info(spec, a, h)
    if info.degenerate:
        warnings.warn(
            f"eta_+(a, {h}) = 0: optimal extremal precision is 0", DegenerateLambdaWarning, stacklevel=2
        )
    return info.value


def lambda_opt_ar1(phi: float, spec: RegVarSpec, h: int) -> float:
    """Closed form for AR(1) with coefficient ``phi``."""
    if not abs(phi) < 1:
        raise DomainError(f"|phi| must be < 1, got {phi}")
    if not spec.p_eps > 0:
        raise DomainError("closed form needs p_eps > 0")
    if int(h) != h or h < 1:
        raise DomainError(f"horizon must be an integer >= 1, got {h!r}")
    h = int(h)
    base = abs(phi) ** (h * spec.alpha)
    if phi >= 0 or h % 2 == 0:
        return base
    r = abs(phi) ** spec.alpha
    p = spec.p_eps
    return base * (p * r + 1 - p) / (p + (1 - p) * r)


def pareto_linear_lambda(a, alpha: float) -> float:
    """``lambda_opt`` for ``Y = a.X + eps`` with iid standard alpha-Pareto components."""
    s = float(np.sum(np.maximum(np.asarray(a, dtype=float), 0.0) ** alpha))
    return s / (1.0 + s)


# ------------------------------------------------------------ oracle bounds

@dataclass(frozen=True)
class OracleBounds:
    lambda_yy: float
    lambda_y_neg: float
    lambda_opt: float
    case: str
    lower: float
    upper: float


def _shift(a: np.ndarray, h: int) -> np.ndarray:
    return np.concatenate([np.zeros(h), a])


def oracle_bounds(spec: RegVarSpec, a, h: int) -> OracleBounds:
    """Compare the optimal precision with thresholding ``+-Y_t`` alone.

    Requires ``|a_{j+h}| <= |a_j|`` for every stored ``j``. The relation
    that applies (equality, the symmetric sum identity, or the two-sided
    bracket) is checked and returned; a violation raises ``AssertionError``.
    """
    arr = coeff_array(a)
    if int(h) != h or h < 1:
        raise DomainError(f"horizon must be an integer >= 1, got {h!r}")
    h = int(h)
    absa = np.abs(arr)
    if arr.size > h:
        bad = np.nonzero(absa[h:] > absa[:-h] * (1 + _REL_TOL))[0]
        if bad.size:
            j = int(bad[0])
            raise DomainError(
                f"coefficients are not lag-{h} absolutely decreasing: |a_{j + h}| > |a_{j}| at j={j}"
            )
    info = lambda_opt_info(spec, arr, h)
    if info.degenerate:
        raise DomainError(f"eta_+(a, {h}) must be positive")
    lam_opt = info.value
    n = arr.size + h
    a_full = _pad(arr, n)
    lag = _shift(arr, h)
    lam_yy = tail_dependence(spec, a_full, lag)
    eta_m = eta_norm(spec, arr, 0, "-")
    eta_p = info.eta_0
    lam_neg = tail_dependence(spec, a_full, -lag) if eta_m > 0 else 0.0

    prod = arr[h:] * arr[:-h] if arr.size > h else np.empty(0)
    tol = _REL_TOL * max(1.0, lam_opt)
    if eta_m == 0 or np.all(prod >= 0):
        case, lo, hi = "equal", lam_yy, lam_yy
        if abs(lam_yy - lam_opt) > tol:
            raise AssertionError(f"equality case violated: {lam_yy} != {lam_opt}")
    elif spec.p_eps == 0.5:
        case = "symmetric_sum"
        lo = hi = lam_yy + lam_neg
        if abs(lo - lam_opt) > tol:
            raise AssertionError(f"symmetric-sum identity violated: {lo} != {lam_opt}")
    else:
        case = "bracketed"
        lo = lam_yy + lam_neg
        hi = lam_yy + max(1.0, eta_m / eta_p) * lam_neg
        if not (lo <= lam_opt + tol and lam_opt <= hi + tol):
            raise AssertionError(f"bracket violated: {lo} <= {lam_opt} <= {hi} fails")
    return OracleBounds(lam_yy, lam_neg, lam_opt, case, lo, hi)


# -------------------------------------------------------------- FARIMA grid

def farima_eta_tail(d: float, alpha: float, a) -> float:
    """Integral estimate of ``sum_{j >= K} a_j^alpha`` for FARIMA coefficients.

    Uses ``a_j ~ C j^{d-1}`` with ``C`` matched at the last stored index.
    """
    arr = coeff_array(a)
    K = arr.size
    beta = (1.0 - d) * alpha
    if K < 2 or beta <= 1 or d <= 0:
        return 0.0
    c = arr[-1] / (K - 1) ** (d - 1.0)
    return float(c ** alpha * (K - 0.5) ** (1.0 - beta) / (beta - 1.0))


@dataclass(frozen=True)
class LambdaGrid:
    d_grid: tuple
    alpha_grid: tuple
    values: np.ndarray  # shape (len(d_grid), len(alpha_grid)); NaN where infeasible
    degenerate: np.ndarray
    h: int
    K: int
    p_eps: float

    def rows(self):
        """``(d, alpha, lambda_or_None)`` in row-major order."""
        for i, d in enumerate(self.d_grid):
            for j, al in enumerate(self.alpha_grid):
                v = self.values[i, j]
                yield d, al, (None if np.isnan(v) else float(v))


def farima_lambda_grid(
    d_grid: Sequence[float],
    alpha_grid: Sequence[float],
    p_eps: float,
    h: int,
    K: int = 1_000_000,
    tail_correction: bool = False,
) -> LambdaGrid:
    """Optimal extremal precision of FARIMA(0,d,0) over a ``(d, alpha)`` grid.

    Cells with ``d >= 1 - 1/alpha`` are left as NaN. ``tail_correction``
    adds the integral estimate of the truncated tail to both sums.
    """
    d_grid = tuple(float(v) for v in d_grid)
    alpha_grid = tuple(float(v) for v in alpha_grid)
    vals = np.full((len(d_grid), len(alpha_grid)), np.nan)
    degen = np.zeros_like(vals, dtype=bool)
    for i, d in enumerate(d_grid):
        feasible = [j for j, al in enumerate(alpha_grid) if 1 < al < 2 and 0 <= d < 1 - 1 / al]
        if not feasible:
            continue
        a = farima_ma_coeffs(d, K).a
        for j in feasible:
            spec = RegVarSpec(alpha_grid[j], p_eps)
            tail = p_eps * farima_eta_tail(d, alpha_grid[j], a) if tail_correction else 0.0
            info = lambda_opt_info(spec, a, h, eta_tail=tail)
            vals[i, j] = info.value
            degen[i, j] = info.degenerate
    return LambdaGrid(d_grid, alpha_grid, vals, degen, int(h), int(K), float(p_eps))


# -------------------------------------------------------- Monte-Carlo oracle

def empirical_conditional_exceedance(target, conditioner, p: float, q: Optional[float] = None) -> float:
    """``P[target > F^<-(p) | conditioner > G^<-(q)]`` with empirical quantiles."""
    x = np.asarray(target, dtype=float)
    y = np.asarray(conditioner, dtype=float)
    if x.shape != y.shape:
        raise DomainError("target and conditioner must align")
    q = p if q is None else q
    tx = generalized_inverse(EmpiricalDistribution(np.sort(x)), p)
    ty = generalized_inverse(EmpiricalDistribution(np.sort(y)), q)
    cond = y > ty
    if not cond.any():
        raise DomainError("no conditioning exceedances")
    return float(np.mean(x[cond] > tx))


__all__ = [
    "RegVarSpec",
    "kappa_plus",
    "kappa_minus",
    "kappa_pp",
    "eta_norm",
    "extremal_skewness",
    "tail_dependence",
    "LambdaOpt",
    "lambda_opt_info",
    "lambda_opt_ma",
    "lambda_opt_ar1",
    "pareto_linear_lambda",
    "OracleBounds",
    "oracle_bounds",
    "farima_eta_tail",
    "LambdaGrid",
    "farima_lambda_grid",
    "empirical_conditional_exceedance",
]
