"""Time-delay embedding and (smooth) recurrence / joint-recurrence imaging."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DimMismatch, SeriesTooShort

PI_OVER_18 = math.pi / 18.0


class DegenerateDistancesWarning(UserWarning):
    """All pairwise trajectory distances are zero; a quantile threshold is 0."""


@dataclass(frozen=True)
class EmbeddingSpec:
    m: int = 1
    kappa: int = 1

    def __post_init__(self):
        if int(self.m) < 1 or int(self.kappa) < 1:
            raise ValueError("embedding needs m >= 1 and kappa >= 1")

    def n_trajectories(self, T: int) -> int:
        return T - (self.m - 1) * self.kappa

    def check(self, T: int) -> int:
        S = self.n_trajectories(T)
        if S < 2:
            raise SeriesTooShort(f"T={T} with m={self.m}, kappa={self.kappa} gives S={S} < 2")
        return S


@dataclass(frozen=True)
class ThresholdSpec:
    """Either a fixed radius ``eps`` or the ``q``-quantile of trajectory distances."""

    mode: str = "fixed"
    value: float = PI_OVER_18

    def __post_init__(self):
        if self.mode == "fixed":
            if not self.value > 0:
                raise ValueError("fixed threshold must be > 0")
        elif self.mode == "quantile":
            if not 0.0 < self.value < 1.0:
                raise ValueError("quantile must lie in (0, 1)")
        else:
            raise ValueError(f"unknown threshold mode {self.mode!r}")

    @classmethod
    def fixed(cls, eps: float) -> "ThresholdSpec":
        return cls("fixed", float(eps))

    @classmethod
    def quantile(cls, q: float) -> "ThresholdSpec":
        return cls("quantile", float(q))

    @classmethod
    def parse(cls, text: str) -> "ThresholdSpec":
        """Parse ``fixed:X`` or ``q:Q``; ``X`` may be written ``pi/18``."""
        kind, _, val = text.partition(":")
        if kind == "fixed":
            if val.replace(" ", "") in ("pi/18", "π/18"):
                return cls.fixed(PI_OVER_18)
            return cls.fixed(float(val))
        if kind in ("q", "quantile"):
            return cls.quantile(float(val))
        raise ValueError(f"threshold must look like fixed:X or q:Q, got {text!r}")

    def __str__(self):
        return f"fixed:{self.value!r}" if self.mode == "fixed" else f"q:{self.value!r}"


@dataclass(frozen=True, eq=False)
class RecurrenceImage:
    values: np.ndarray
    smooth: bool = False
    nu: Optional[float] = None
    eps: Optional[float] = None

    @property
    def size(self) -> int:
        return self.values.shape[0]


def embed(series, spec: EmbeddingSpec) -> np.ndarray:
    """Delay vectors as an ``S x m`` array; row j reads ``series[j + s*kappa]``."""
    x = np.asarray(series, dtype=np.float64)
    S = spec.check(x.shape[0])
    cols = [x[s * spec.kappa : s * spec.kappa + S] for s in range(spec.m)]
    return np.stack(cols, axis=1)


def distances(series, spec: EmbeddingSpec) -> np.ndarray:
    x = np.ascontiguousarray(series, dtype=np.float64)
    spec.check(x.shape[0])
    return kernels.trajectory_distances(x, spec.m, spec.kappa)


def threshold_from_distances(dist: np.ndarray, thr: ThresholdSpec) -> float:
    if thr.mode == "fixed":
        return float(thr.value)
    iu = np.triu_indices(dist.shape[0], k=1)
    off = dist[iu]
    if not np.any(off > 0):
        warnings.warn("all trajectory distances are zero; threshold set to 0",
                      DegenerateDistancesWarning, stacklevel=3)
        return 0.0
    return float(np.quantile(off, thr.value, method="linear"))


def resolve_threshold(series, emb: EmbeddingSpec, thr: ThresholdSpec) -> float:
    """Radius used for imaging ``series``.

    Quantile mode interpolates linearly between order statistics of the
    ``S(S-1)/2`` off-diagonal distances.
    """
    if thr.mode == "fixed":
        return float(thr.value)
    return threshold_from_distances(distances(series, emb), thr)


def hard_from_distances(dist: np.ndarray, eps: float) -> np.ndarray:
    # closed ball: H(0) = 1
    return (dist <= eps).astype(np.float64)


def smooth_from_distances(dist: np.ndarray, eps: float, nu: float) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(nu * (eps - dist)))


def rp_hard(series, emb: EmbeddingSpec, thr: ThresholdSpec) -> RecurrenceImage:
    dist = distances(series, emb)
    eps = threshold_from_distances(dist, thr)
    return RecurrenceImage(hard_from_distances(dist, eps), smooth=False, eps=eps)


def rp_smooth(series, emb: EmbeddingSpec, thr: ThresholdSpec, nu: float) -> RecurrenceImage:
    if not nu > 0:
        raise ValueError("nu must be > 0")
    dist = distances(series, emb)
    eps = threshold_from_distances(dist, thr)
    return RecurrenceImage(smooth_from_distances(dist, eps, nu), smooth=True, nu=float(nu), eps=eps)


def rp(series, emb: EmbeddingSpec, thr: ThresholdSpec, nu: Optional[float] = None) -> RecurrenceImage:
    """Hard image when ``nu`` is None, smooth otherwise."""
    return rp_hard(series, emb, thr) if nu is None else rp_smooth(series, emb, thr, nu)


def jrp(matrix, emb: EmbeddingSpec, thr_per_dim, nu: Optional[float] = None) -> RecurrenceImage:
    """Hadamard product of the per-dimension recurrence images of a ``p x T`` matrix.

    ``thr_per_dim`` is a sequence with one :class:`ThresholdSpec` per row, or a
    single spec applied to every row.
    """
    X = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    p = X.shape[0]
    if isinstance(thr_per_dim, ThresholdSpec):
        thr_per_dim = [thr_per_dim] * p
    thr_per_dim: Sequence[ThresholdSpec] = list(thr_per_dim)
    if len(thr_per_dim) != p:
        raise DimMismatch(f"{len(thr_per_dim)} thresholds for p={p} dimensions")
    out = None
    for j in range(p):
        img = rp(X[j], emb, thr_per_dim[j], nu).values
        out = img if out is None else out * img
    return RecurrenceImage(out, smooth=nu is not None, nu=None if nu is None else float(nu))
