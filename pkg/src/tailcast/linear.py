"""Linear model machinery: AR estimation, horizon coefficients and MA/FARIMA recursions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.signal import lfilter

from .exceptions import DomainError, FitError, NonCausalError
from .series import as_array, lag_matrix

log = logging.getLogger(__name__)

CAUSAL_MARGIN = 1e-6


def _vec(x, name="coefficients") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArModel:
    """Fitted or specified AR(d) coefficients ``phi_1..phi_d``."""

    phi: np.ndarray
    loss: str = "given"
    n: int = 0
    solver: Optional[str] = None
    objective: Optional[float] = None
    iterations: Optional[int] = None
    innovation_note: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "phi", _vec(self.phi, "phi"))

    @property
    def d(self) -> int:
        return int(self.phi.size)

    def to_dict(self) -> dict:
        return {"phi": [float(v) for v in self.phi], "order": self.d, "loss": self.loss, "n": int(self.n)}


@dataclass(frozen=True)
class MaCoefficients:
    """Truncated causal moving-average weights ``a_0..a_{K-1}``."""

    a: np.ndarray

    def __post_init__(self):
        arr = _vec(self.a, "MA coefficients")
        if arr.size == 0:
            raise DomainError("MA coefficients must be non-empty")
        object.__setattr__(self, "a", arr)

    @property
    def K(self) -> int:
        return int(self.a.size)

    def __len__(self):
        return self.K

    def __getitem__(self, item):
        return self.a[item]


def coeff_array(a) -> np.ndarray:
    """Accept ``MaCoefficients`` or any array-like."""
    if isinstance(a, MaCoefficients):
        return a.a
    return _vec(a)


@dataclass(frozen=True)
class FarimaModel:
    """FARIMA(0,d,0) memory parameter with a stable innovation index."""

    d: float
    alpha: float

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise DomainError(f"alpha must lie in (1, 2), got {self.alpha}")
        if not 0.0 < self.d < 1.0 - 1.0 / self.alpha:
            raise DomainError(
                f"d must lie in (0, 1 - 1/alpha) = (0, {1 - 1 / self.alpha:.6g}), got {self.d}"
            )


@dataclass(frozen=True)
class HorizonCoefficients:
    phi_h: np.ndarray
    h: int


def _trim(phi: np.ndarray) -> np.ndarray:
    nz = np.nonzero(phi)[0]
    return phi[: nz[-1] + 1] if nz.size else phi[:0]


def ar_roots(phi) -> np.ndarray:
    """Roots of ``1 - sum_i phi_i z^i`` (empty when the polynomial is constant)."""
    phi = _trim(_vec(phi, "phi"))
    if phi.size == 0:
        return np.empty(0, dtype=complex)
    # np.roots expects highest degree first.
    poly = np.concatenate([-phi[::-1], [1.0]])
    return np.roots(poly)


def check_causal(phi, margin: float = CAUSAL_MARGIN) -> bool:
    """True iff every root of the AR polynomial has modulus at least ``1 + margin``."""
    roots = ar_roots(phi)
    return bool(np.all(np.abs(roots) >= 1.0 + margin))


def _require_causal(phi):
    if not check_causal(phi):
        mod = np.abs(ar_roots(phi)).min()
        raise NonCausalError(f"AR polynomial is not causal (smallest root modulus {mod:.6g})")


def companion_matrix(phi) -> np.ndarray:
    phi = _vec(phi, "phi")
    d = phi.size
    m = np.zeros((d, d))
    m[:, 0] = phi
    m[np.arange(d - 1), np.arange(1, d)] = 1.0
    return m


def companion_power(phi, h: int) -> HorizonCoefficients:
    """h-step coefficients: first column of the h-th power of the companion matrix."""
    if int(h) != h or h < 1:
        raise DomainError(f"horizon must be an integer >= 1, got {h!r}")
    h = int(h)
    mh = np.linalg.matrix_power(companion_matrix(phi), h)
    out = mh[:, 0].copy()
    out.setflags(write=False)
    return HorizonCoefficients(out, h)


def ar_design(y, d: int):
    """Regressors ``(Y_s, ..., Y_{s-d+1})`` and responses ``Y_{s+1}``."""
    y = as_array(y)
    X = lag_matrix(y[:-1], d)
    return X, y[d:]


def _check_fit_inputs(y, d):
    if int(d) != d or d < 1:
        raise DomainError(f"order must be a positive integer, got {d!r}")
    y = as_array(y)
    if y.size < 10 * d:
        raise DomainError(f"need at least {10 * d} observations for order {d}, got {y.size}")
    return y, int(d)


def fit_ar_ols(y, d: int) -> ArModel:
    """Least-squares AR(d) fit without intercept."""
    y, d = _check_fit_inputs(y, d)
    X, t = ar_design(y, d)
    beta, _, rank, sv = np.linalg.lstsq(X, t, rcond=None)
    if rank < d:
        raise FitError(f"singular AR design: rank {rank} < order {d}", diagnostics={"rank": int(rank)})
    resid = t - X @ beta
    return ArModel(
        beta,
        loss="ols",
        n=y.size,
        solver="lstsq",
        objective=float(resid @ resid),
        innovation_note={"resid_scale": float(np.std(resid))},
    )


def lad_objective(phi, y) -> float:
    X, t = ar_design(y, np.asarray(phi).size)
    return float(np.abs(t - X @ np.asarray(phi)).sum())


def _lad_lp(X, t):
    n, d = X.shape
    c = np.concatenate([np.zeros(2 * d), np.ones(2 * n)])
    eye = sparse.identity(n, format="csr")
    Xs = sparse.csr_matrix(X)
    A = sparse.hstack([Xs, -Xs, eye, -eye], format="csr")
    res = linprog(c, A_eq=A, b_eq=t, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    return res.x[:d] - res.x[d : 2 * d]


def fit_ar_lad(
    y,
    d: int,
    eta_rel: float = 1e-8,
    max_iter: int = 200,
    tol: float = 1e-8,
    fallback: Optional[str] = "lp",
) -> ArModel:
    """Least-absolute-deviation AR(d) fit.

    Iteratively reweighted least squares on the smoothed loss
    ``sqrt(r^2 + eta^2)``, started from OLS. If the iteration cap is hit,
    an exact linear program is solved and the lower-objective solution is
    kept. With ``fallback=None`` non-convergence raises ``FitError``
    carrying the best iterate.
    """
    y, d = _check_fit_inputs(y, d)
    X, t = ar_design(y, d)
    beta, _, rank, _ = np.linalg.lstsq(X, t, rcond=None)
    if rank < d:
        raise FitError(f"singular AR design: rank {rank} < order {d}", diagnostics={"rank": int(rank)})
    r = t - X @ beta
    scale = float(np.median(np.abs(r)))
    if scale <= 1e-12 * max(1.0, float(np.max(np.abs(t)))):
        # Essentially an exact fit; nothing to reweight.
        return ArModel(beta, "lad", y.size, "exact", float(np.abs(r).sum()), 0)
    eta = eta_rel * scale

    def obj(b):
        return float(np.abs(t - X @ b).sum())

    best, best_obj = beta, obj(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = t - X @ beta
        sw = (r * r + eta * eta) ** -0.25
        new = np.linalg.lstsq(X * sw[:, None], t * sw, rcond=None)[0]
        step = float(np.max(np.abs(new - beta)))
        beta = new
        o = obj(beta)
        if o < best_obj:
            best, best_obj = beta, o
        if step < tol:
            converged = True
            break
    if converged:
        return ArModel(beta, "lad", y.size, "irls", obj(beta), it)

    diag = {"iterations": it, "last_step": step, "objective": best_obj}
    if fallback != "lp":
        raise FitError("LAD IRLS did not converge", best=best, diagnostics=diag)
    log.info("LAD IRLS hit %d iterations (step %.3g); solving exact LP", it, step)
    lp = _lad_lp(X, t)
    if lp is None:
        raise FitError("LAD IRLS did not converge and LP fallback failed", best=best, diagnostics=diag)
    lp_obj = obj(lp)
    if lp_obj <= best_obj:
        return ArModel(lp, "lad", y.size, "lp", lp_obj, it)
    return ArModel(best, "lad", y.size, "irls-best", best_obj, it)


def yule_walker(y, d: int, h: int = 1) -> np.ndarray:
    """Solve ``Gamma_d phi = (gamma(h), ..., gamma(h+d-1))`` from sample autocovariances."""
    y = as_array(y)
    y = y - y.mean()
    n = y.size
    lags = np.arange(h + d)
    gam = np.array([y[: n - k] @ y[k:] / n for k in lags])
    G = gam[np.abs(np.subtract.outer(np.arange(d), np.arange(d)))]
    return np.linalg.solve(G, gam[h : h + d])


def ar_to_ma(phi, K: int) -> MaCoefficients:
    """Power-series expansion ``a`` of ``1 / (1 - sum phi_i z^i)`` up to ``K`` terms."""
    if int(K) != K or K < 1:
        raise DomainError(f"truncation must be >= 1, got {K!r}")
    phi = _vec(phi, "phi")
    _require_causal(phi)
    imp = np.zeros(int(K))
    imp[0] = 1.0
    return MaCoefficients(lfilter([1.0], np.concatenate([[1.0], -phi]), imp))


def farima_ma_coeffs(d: float, K: int) -> MaCoefficients:
    """Coefficients of ``(1 - z)^{-d}`` by the ratio recursion ``a_j = a_{j-1}(j-1+d)/j``."""
    if int(K) != K or K < 1:
        raise DomainError(f"truncation must be >= 1, got {K!r}")
    if not d > -0.5:
        raise DomainError(f"memory parameter must exceed -1/2, got {d}")
    if d != 0 and float(d).is_integer():
        raise DomainError(f"memory parameter must be non-integral, got {d}")
    j = np.arange(1, int(K), dtype=float)
    a = np.empty(int(K))
    a[0] = 1.0
    a[1:] = np.cumprod((j - 1.0 + d) / j)
    return MaCoefficients(a)


def invert_coeffs(a, L: int) -> np.ndarray:
    """Inverse series ``b`` with ``sum_s a_s b_{r-s} = delta_r`` for ``r < L``."""
    if int(L) != L or L < 1:
        raise DomainError(f"length must be >= 1, got {L!r}")
    arr = coeff_array(a)
    if arr[0] != 1.0:
        raise DomainError(f"leading coefficient must be 1, got {arr[0]}")
    imp = np.zeros(int(L))
    imp[0] = 1.0
    return lfilter([1.0], arr[: int(L)], imp)


def finite_history_coeffs(a, b, h: int, ell: int) -> np.ndarray:
    """``c_r = sum_{s<=r} a_{s+h} b_{r-s}`` for ``r = 0..ell-1``."""
    if int(h) != h or h < 0 or int(ell) != ell or ell < 1:
        raise DomainError("need integer h >= 0 and ell >= 1")
    h, ell = int(h), int(ell)
    a = coeff_array(a)
    b = np.asarray(b, dtype=float).ravel()
    if a.size < ell + h:
        raise DomainError(f"a has {a.size} coefficients, need {ell + h}")
    if b.size < ell:
        raise DomainError(f"b has {b.size} coefficients, need {ell}")
    return np.convolve(a[h : h + ell], b[:ell])[:ell]


__all__ = [
    "ArModel",
    "MaCoefficients",
    "FarimaModel",
    "HorizonCoefficients",
    "ar_roots",
    "check_causal",
    "companion_matrix",
    "companion_power",
    "ar_design",
    "fit_ar_ols",
    "fit_ar_lad",
    "lad_objective",
    "yule_walker",
    "ar_to_ma",
    "farima_ma_coeffs",
    "invert_coeffs",
    "finite_history_coeffs",
    "coeff_array",
]
