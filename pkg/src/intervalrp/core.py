"""Interval-valued series types and the convex-combination representation.

An interval series is stored as two aligned bound arrays. A point series is
obtained from it by blending the bounds coordinate-wise,
``C[t] = alpha[t] * lower[t] + (1 - alpha[t]) * upper[t]``; ``alpha`` is either
indexed by time (univariate) or by dimension (multivariate, shared over time).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInterval, LengthMismatch, NegativeRange


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise InvalidInterval(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IntervalSeries:
    """Univariate interval-valued series ``[lower[t], upper[t]]``, t = 0..T-1."""

    lower: np.ndarray
    upper: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        lo = _frozen(self.lower, 1, "lower")
        up = _frozen(self.upper, 1, "upper")
        if lo.shape != up.shape:
            raise InvalidInterval(f"bound lengths differ: {lo.shape[0]} vs {up.shape[0]}")
        if lo.shape[0] < 2:
            raise InvalidInterval("an interval series needs T >= 2")
        if np.any(lo > up):
            t = int(np.argmax(lo > up))
            raise InvalidInterval(f"lower > upper at t={t}")
        if self.label is not None and int(self.label) < 0:
            raise InvalidInterval("label must be >= 0")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def T(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True, eq=False)
class MvIntervalSeries:
    """Multivariate interval series; bounds are ``p x T`` matrices."""

    lower: np.ndarray
    upper: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        lo = _frozen(self.lower, 2, "lower")
        up = _frozen(self.upper, 2, "upper")
        if lo.shape != up.shape:
            raise InvalidInterval(f"bound shapes differ: {lo.shape} vs {up.shape}")
        if lo.shape[0] < 1 or lo.shape[1] < 2:
            raise InvalidInterval("need p >= 1 and T >= 2")
        if np.any(lo > up):
            j, t = np.argwhere(lo > up)[0]
            raise InvalidInterval(f"lower > upper at dim={j}, t={t}")
        if self.label is not None and int(self.label) < 0:
            raise InvalidInterval("label must be >= 0")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def p(self) -> int:
        return self.lower.shape[0]

    @property
    def T(self) -> int:
        return self.lower.shape[1]

    def dim(self, j: int) -> IntervalSeries:
        return IntervalSeries(self.lower[j], self.upper[j], self.label)


@dataclass(frozen=True, eq=False)
class CenterRange:
    center: np.ndarray
    range: np.ndarray

    def __post_init__(self):
        c = _frozen(self.center, 1, "center")
        r = _frozen(self.range, 1, "range")
        if c.shape != r.shape:
            raise LengthMismatch(f"center/range lengths differ: {c.shape[0]} vs {r.shape[0]}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "range", r)


class Axis(enum.Enum):
    PER_TIME = "per_time"
    PER_DIM = "per_dim"


@dataclass(frozen=True, eq=False)
class CombinationCoefficients:
    """Convex-combination weights, each in [0, 1]."""

    alpha: np.ndarray
    axis: Axis = Axis.PER_TIME

    def __post_init__(self):
        a = _frozen(self.alpha, 1, "alpha")
        if np.any(a < 0.0) or np.any(a > 1.0) or not np.all(np.isfinite(a)):
            raise InvalidInterval("combination coefficients must lie in [0, 1]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "axis", Axis(self.axis))

    @classmethod
    def constant(cls, value: float, n: int, axis: Axis = Axis.PER_TIME) -> "CombinationCoefficients":
        return cls(np.full(n, float(value)), axis)


def to_center_range(s: IntervalSeries) -> CenterRange:
    return CenterRange((s.lower + s.upper) / 2.0, (s.upper - s.lower) / 2.0)


def from_center_range(cr: CenterRange, clamp: bool = False, label: Optional[int] = None) -> IntervalSeries:
    """Rebuild bounds ``center -/+ range``.

    Negative ranges raise :class:`NegativeRange` unless ``clamp`` is set, in
    which case they are replaced by 0 (a degenerate interval at the center).
    """
    r = cr.range
    if np.any(r < 0):
        if not clamp:
            t = int(np.argmax(r < 0))
            raise NegativeRange(f"range[{t}] = {r[t]!r} < 0")
        r = np.maximum(r, 0.0)
    return IntervalSeries(cr.center - r, cr.center + r, label)


def _alpha_array(a) -> np.ndarray:
    if isinstance(a, CombinationCoefficients):
        return a.alpha
    return np.asarray(a, dtype=np.float64)


def convex_combination(s: IntervalSeries, a) -> np.ndarray:
    """Point series ``alpha*lower + (1-alpha)*upper`` with per-time ``alpha``.

    ``a`` may be a :class:`CombinationCoefficients` or a raw array; raw arrays
    are not box-checked so that ADMM iterates slightly outside [0, 1] can be
    imaged.
    """
    if isinstance(a, CombinationCoefficients) and a.axis is not Axis.PER_TIME:
        raise LengthMismatch("univariate combination needs per-time coefficients")
    alpha = _alpha_array(a)
    if alpha.shape != (s.T,):
        raise LengthMismatch(f"alpha has length {alpha.size}, series has T={s.T}")
    return alpha * s.lower + (1.0 - alpha) * s.upper


def convex_combination_mv(s: MvIntervalSeries, a) -> np.ndarray:
    """``diag(alpha) @ lower + diag(1-alpha) @ upper`` with per-dimension ``alpha``."""
    if isinstance(a, CombinationCoefficients) and a.axis is not Axis.PER_DIM:
        raise LengthMismatch("multivariate combination needs per-dimension coefficients")
    alpha = _alpha_array(a)
    if alpha.shape != (s.p,):
        raise LengthMismatch(f"alpha has length {alpha.size}, series has p={s.p}")
    col = alpha[:, None]
    return col * s.lower + (1.0 - col) * s.upper
