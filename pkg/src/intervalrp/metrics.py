"""Multiclass precision, recall and F1 (micro, macro, weighted) plus accuracy.

Per-label scores with an empty denominator are 0; such labels still count in
the macro average. Macro/weighted F1 average the per-label F1 values rather
than combining averaged precision and recall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .errors import LabelOutOfRange, ShapeMismatch

SCORE_KEYS = ("miP", "maP", "weiP", "miR", "maR", "weiR", "miF1", "maF1", "weiF1", "accuracy")


@dataclass
class Confusion:
    counts: np.ndarray  # counts[true, pred]

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts).astype(np.int64)

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.counts + other.counts)


def confusion(true_labels, pred_labels, K: int) -> Confusion:
    y = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if y.shape != p.shape:
        raise ShapeMismatch(f"{y.size} true labels vs {p.size} predictions")
    for arr in (y, p):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            raise LabelOutOfRange(f"labels must lie in [0, {K})")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (y, p), 1)
    return Confusion(counts)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _f1(p, r):
    return _ratio(2.0 * p * r, p + r)


@dataclass
class Scores:
    values: Dict[str, float]
    degenerate_labels: List[int] = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def as_dict(self) -> Dict[str, float]:
        return dict(self.values)


def scores(c: Confusion) -> Scores:
    """The ten summary scores of a confusion matrix."""
    if c.total <= 0:
        raise ValueError("empty confusion matrix")
    tp, fp, fn, support = c.tp, c.fp, c.fn, c.support
    prec = _ratio(tp, tp + fp)
    rec = _ratio(tp, tp + fn)
    f1 = _f1(prec, rec)
    mi_p = float(_ratio(tp.sum(), tp.sum() + fp.sum()))
    mi_r = float(_ratio(tp.sum(), tp.sum() + fn.sum()))
    w = support / support.sum()
    values = {
        "miP": mi_p,
        "maP": float(prec.mean()),
        "weiP": float(w @ prec),
        "miR": mi_r,
        "maR": float(rec.mean()),
        "weiR": float(w @ rec),
        "miF1": float(_f1(mi_p, mi_r)),
        "maF1": float(f1.mean()),
        "weiF1": float(w @ f1),
        "accuracy": float(tp.sum() / c.total),
    }
    degenerate = [int(l) for l in np.flatnonzero((tp + fp == 0) | (tp + fn == 0))]
    return Scores(values, degenerate)
