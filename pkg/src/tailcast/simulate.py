"""Seeded innovation samplers and linear-process path simulation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .exceptions import DomainError
from .linear import ar_roots, _require_causal, coeff_array, farima_ma_coeffs, _vec
from .series import Series

RNG_NAME = "numpy.PCG64"
FAMILIES = ("symmetric-alpha-stable", "pareto", "cauchy", "gaussian")
_ALIASES = {"stable": "symmetric-alpha-stable", "sas": "symmetric-alpha-stable", "t1": "cauchy"}

# Below this many multiply-adds a direct convolution beats the FFT.
_DIRECT_CONV_LIMIT = 5_000_000


@dataclass(frozen=True)
class InnovationSpec:
    family: str
    alpha: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        fam = _ALIASES.get(self.family.lower(), self.family.lower())
        if fam not in FAMILIES:
            raise DomainError(f"unknown innovation family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        if fam == "symmetric-alpha-stable":
            if self.alpha is None or not 0 < self.alpha < 2:
                raise DomainError(f"stable index must lie in (0, 2), got {self.alpha}")
        elif fam == "pareto":
            if self.alpha is None or not self.alpha > 0:
                raise DomainError(f"pareto index must be positive, got {self.alpha}")


@dataclass(frozen=True)
class SimConfig:
    n: int
    seed: int = 0
    burn_in: Optional[int] = None
    truncation: int = 10_000

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if self.burn_in is not None and (int(self.burn_in) != self.burn_in or self.burn_in < 0):
            raise DomainError(f"burn_in must be a non-negative integer, got {self.burn_in}")
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise DomainError(f"truncation must be >= 1, got {self.truncation}")

    def to_dict(self) -> dict:
        return asdict(self)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _stable(alpha: float, size: int, rng) -> np.ndarray:
    # Chambers-Mallows-Stuck, symmetric case.
    v = rng.uniform(-math.pi / 2, math.pi / 2, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(v)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def draw_innovations(spec: InnovationSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` iid innovations from ``rng``."""
    fam = spec.family
    if fam == "gaussian":
        x = rng.standard_normal(size)
    elif fam == "cauchy":
        x = rng.standard_cauchy(size)
    elif fam == "pareto":
        # 1 - U lies in (0, 1], so the power is finite.
        return spec.scale * (1.0 - rng.random(size)) ** (-1.0 / spec.alpha)
    else:
        x = _stable(float(spec.alpha), size, rng)
    return spec.scale * x


def sample_innovations(spec: InnovationSpec, cfg: SimConfig) -> np.ndarray:
    """Length-``cfg.n`` innovation sequence, reproducible from ``cfg.seed``."""
    return draw_innovations(spec, int(cfg.n), make_rng(cfg.seed))


def ar_burn_in(phi) -> int:
    """Ten times the lag where the AR impulse response drops below 1e-12, floored at 1000."""
    roots = ar_roots(phi)
    if roots.size == 0:
        return 1000
    rho = 1.0 / float(np.min(np.abs(roots)))
    if rho <= 0:
        return 1000
    mem = math.ceil(math.log(1e-12) / math.log(rho)) if rho < 1 else 10**6
    return int(max(1000, 10 * mem))


def _stream(spec, cfg, total, innovations):
    if innovations is None:
        return draw_innovations(spec, total, make_rng(cfg.seed))
    e = np.asarray(innovations, dtype=float).ravel()
    if e.size != total:
        raise DomainError(f"expected {total} innovations (n + burn_in), got {e.size}")
    return e


def simulate_ar(phi, spec: InnovationSpec, cfg: SimConfig, innovations=None) -> Series:
    """AR(d) path from a zero initial state with the burn-in prefix discarded.

    ``innovations`` overrides sampling; it must hold ``n + burn_in`` values.
    """
    phi = _vec(phi, "phi")
    _require_causal(phi)
    burn = ar_burn_in(phi) if cfg.burn_in is None else int(cfg.burn_in)
    e = _stream(spec, cfg, cfg.n + burn, innovations)
    y = lfilter([1.0], np.concatenate([[1.0], -phi]), e)
    return Series(y[burn:])


def _causal_convolve(a: np.ndarray, e: np.ndarray) -> np.ndarray:
    if a.size * e.size <= _DIRECT_CONV_LIMIT:
        return np.convolve(e, a)[: e.size]
    return fftconvolve(e, a)[: e.size]


def simulate_ma(a, spec: InnovationSpec, cfg: SimConfig, innovations=None) -> Series:
    """Truncated MA path ``Y_t = sum_{j<K} a_j eps_{t-j}`` with zero pre-sample.

    ``K`` is ``cfg.truncation`` capped by the coefficient length. The default
    burn-in is ``max(1000, K)`` so every retained output sees a full filter.
    """
    arr = coeff_array(a)
    if arr.size == 0:
        raise DomainError("MA coefficients must be non-empty")
    K = min(int(cfg.truncation), arr.size)
    arr = arr[:K]
    burn = max(1000, K) if cfg.burn_in is None else int(cfg.burn_in)
    e = _stream(spec, cfg, cfg.n + burn, innovations)
    return Series(_causal_convolve(arr, e)[burn:])


def simulate_farima(d: float, spec: InnovationSpec, cfg: SimConfig, innovations=None) -> Series:
    """FARIMA(0,d,0) path via the truncated MA representation."""
    return simulate_ma(farima_ma_coeffs(d, cfg.truncation), spec, cfg, innovations)


def metadata(spec: InnovationSpec, cfg: SimConfig, **extra) -> dict:
    """Everything needed to regenerate a path."""
    out = {"generator": RNG_NAME, "innovations": asdict(spec), "config": cfg.to_dict()}
    out.update(extra)
    return out


__all__ = [
    "RNG_NAME",
    "InnovationSpec",
    "SimConfig",
    "make_rng",
    "draw_innovations",
    "sample_innovations",
    "ar_burn_in",
    "simulate_ar",
    "simulate_ma",
    "simulate_farima",
    "metadata",
]
