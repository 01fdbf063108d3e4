"""Series container, empirical distributions and data preparation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

import numpy as np

from .exceptions import DataError, DomainError

log = logging.getLogger(__name__)

# Guards against q*n landing a hair above an integer through rounding.
_RANK_EPS = 1e-10


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Series:
    """A regularly sampled real series with a missing-value mask.

    ``mask[i]`` is True when observation ``i`` is missing. Values at
    missing positions are kept as NaN.
    """

    values: np.ndarray
    mask: np.ndarray = None
    origin: Optional[float] = None
    step: Optional[float] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if self.mask is None:
            mask = ~np.isfinite(vals)
        else:
            mask = np.asarray(self.mask, dtype=bool).ravel()
            if mask.shape != vals.shape:
                raise DomainError(
                    f"values and mask differ in length ({vals.size} vs {mask.size})"
                )
            mask = mask | ~np.isfinite(vals)
        vals = np.where(mask, np.nan, vals)
        object.__setattr__(self, "values", _frozen(vals, float))
        object.__setattr__(self, "mask", _frozen(mask, bool))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    @property
    def complete(self) -> bool:
        return not self.mask.any()

    def require_complete(self) -> np.ndarray:
        """Return the values, raising if anything is missing."""
        if self.mask.any():
            raise DataError(f"series has {self.n_missing} missing values")
        return self.values

    def slice(self, start: int, stop: int) -> "Series":
        origin = self.origin
        if origin is not None and self.step is not None:
            origin = origin + start * self.step
        return Series(self.values[start:stop], self.mask[start:stop], origin, self.step)


def as_array(y) -> np.ndarray:
    """Coerce a Series or array-like into a complete float array."""
    if isinstance(y, Series):
        return np.asarray(y.require_complete(), dtype=float)
    arr = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DataError("input contains missing or non-finite values")
    return arr


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted sample supporting ECDF evaluation and its left-continuous inverse."""

    sorted_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.sorted_values, dtype=float).ravel()
        if vals.size == 0:
            raise DomainError("empirical distribution needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise DomainError("empirical distribution values must be finite")
        if np.any(np.diff(vals) < 0):
            vals = np.sort(vals)
        object.__setattr__(self, "sorted_values", _frozen(vals, float))

    @classmethod
    def from_sample(cls, sample: Iterable[float]) -> "EmpiricalDistribution":
        if not hasattr(sample, "__len__"):
            sample = list(sample)
        return cls(np.sort(np.asarray(sample, dtype=float).ravel()))

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)

    def cdf(self, x):
        return ecdf_eval(self, x)

    def quantile(self, q):
        return generalized_inverse(self, q)


def generalized_inverse(dist: EmpiricalDistribution, q):
    """Smallest stored value ``y`` with ``F_n(y) >= q``.

    Accepts a scalar or an array of levels in (0, 1].
    """
    qa = np.asarray(q, dtype=float)
    if np.any(~(qa > 0)) or np.any(qa > 1):
        raise DomainError(f"quantile level must lie in (0, 1], got {q!r}")
    n = dist.n
    idx = np.ceil(qa * n - _RANK_EPS).astype(np.int64) - 1
    idx = np.clip(idx, 0, n - 1)
    out = dist.sorted_values[idx]
    return float(out) if out.ndim == 0 else out


def ecdf_eval(dist: EmpiricalDistribution, x):
    """Fraction of stored values less than or equal to ``x``."""
    cnt = np.searchsorted(dist.sorted_values, x, side="right")
    out = np.asarray(cnt, dtype=float) / dist.n
    return float(out) if out.ndim == 0 else out


def aggregate_block_max(raw: Series, block_len: int) -> Series:
    """Block maxima over consecutive blocks starting at index 0.

    The final block may be partial. A block with no present value is missing.
    """
    if int(block_len) != block_len or block_len < 1:
        raise DomainError(f"block_len must be a positive integer, got {block_len!r}")
    block_len = int(block_len)
    n = len(raw)
    step = None if raw.step is None else raw.step * block_len
    if n == 0:
        return Series(np.empty(0), np.empty(0, dtype=bool), raw.origin, step)
    nb = math.ceil(n / block_len)
    pad = nb * block_len - n
    vals = np.concatenate([np.where(raw.mask, -np.inf, raw.values), np.full(pad, -np.inf)])
    mx = vals.reshape(nb, block_len).max(axis=1)
    missing = ~np.isfinite(mx)
    return Series(np.where(missing, np.nan, mx), missing, raw.origin, step)


def interpolate_missing(s: Series) -> Series:
    """Fill missing runs linearly; leading/trailing gaps take the nearest present value."""
    if len(s) == 0 or not s.mask.any():
        return s
    present = ~s.mask
    if not present.any():
        raise DataError("cannot interpolate an all-missing series")
    idx = np.arange(len(s))
    filled = np.interp(idx, idx[present], s.values[present])
    return Series(filled, np.zeros(len(s), dtype=bool), s.origin, s.step)


def center(s: Series):
    """Subtract the sample mean. Returns ``(centred_series, mean)``."""
    vals = s.require_complete()
    if vals.size == 0:
        raise DataError("cannot centre an empty series")
    mean = float(np.mean(vals))
    return Series(vals - mean, None, s.origin, s.step), mean


def _parse_timestamp(text: str, lineno: int) -> float:
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"line {lineno}: unparseable timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def read_csv(path) -> Series:
    """Parse a ``timestamp,value`` CSV. Empty value fields are missing.

    A ``t,value`` header (as written by :func:`write_csv`) is also accepted.
    Naive ISO-8601 timestamps are read as UTC.
    """
    times = []
    vals = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        cols = [c.strip().lower() for c in header]
        if len(cols) < 2 or cols[0] not in ("timestamp", "t") or cols[1] != "value":
            raise DataError(f"{path}: expected header 'timestamp,value', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}: line {lineno}: expected two columns")
            times.append(_parse_timestamp(row[0], lineno))
            field_ = row[1].strip()
            if field_ == "":
                vals.append(np.nan)
            else:
                try:
                    vals.append(float(field_))
                except ValueError as exc:
                    raise DataError(f"{path}: line {lineno}: bad value {field_!r}") from exc
    if not times:
        raise DataError(f"{path}: no data rows")
    t = np.asarray(times)
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise DataError(f"{path}: timestamps not strictly increasing at data row {bad[0] + 2}")
    step = float(np.median(np.diff(t))) if t.size > 1 else None
    return Series(np.asarray(vals), None, float(t[0]), step)


def write_csv(path, s: Series, index_name: str = "t") -> None:
    """Write ``index,value`` rows; missing values become empty fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name, "value"])
        for i, (v, m) in enumerate(zip(s.values, s.mask)):
            w.writerow([i, "" if m else repr(float(v))])


def lag_matrix(y: np.ndarray, d: int) -> np.ndarray:
    """Rows ``(y_t, y_{t-1}, ..., y_{t-d+1})`` for ``t = d-1, ..., len(y)-1``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if d < 1 or n < d:
        return np.empty((0, max(d, 0)))
    return np.column_stack([y[d - 1 - i : n - i] for i in range(d)])


__all__ = [
    "Series",
    "EmpiricalDistribution",
    "generalized_inverse",
    "ecdf_eval",
    "aggregate_block_max",
    "interpolate_missing",
    "center",
    "read_csv",
    "write_csv",
    "as_array",
    "lag_matrix",
]
