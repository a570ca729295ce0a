"""Derivatives of smooth RP / JRP images with respect to the combination weights.

For the point series ``C = alpha*lower + (1-alpha)*upper`` we have
``dC[t]/dalpha[t] = lower[t] - upper[t]``. A trajectory distance ``d_jk``
depends on ``alpha[t]`` only through the embedding slots of trajectories j and
k that read coordinate t, and the smooth image entry
``R_jk = (1 + tanh(nu*(eps - d_jk)))/2`` has slope ``-nu/2 * sech^2(nu*(eps - d_jk))``.

Two routes are provided: explicit sparse Jacobians (:class:`ImageGradient`)
contracted by :func:`backprop_to_alpha`, and the fused contraction
:func:`alpha_gradient` used during training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from . import kernels
from .core import IntervalSeries, MvIntervalSeries, convex_combination, convex_combination_mv
from .errors import ShapeMismatch
from .imaging import (
    EmbeddingSpec,
    ThresholdSpec,
    smooth_from_distances,
    threshold_from_distances,
)

Triples = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class ImageGradient:
    """Sparse Jacobian ``dR(j,k)/dalpha[t]``: ``entries[t] = (rows, cols, values)``."""

    entries: Dict[int, Triples]
    size: int
    n_coef: int

    def nnz(self, t: int) -> int:
        return self.entries[t][0].size if t in self.entries else 0

    def dense(self) -> np.ndarray:
        """Jacobian as an ``n_coef x S x S`` array (for tests and small cases)."""
        J = np.zeros((self.n_coef, self.size, self.size))
        for t, (r, c, v) in self.entries.items():
            J[t, r, c] = v
        return J


def _alpha(a) -> np.ndarray:
    return np.asarray(getattr(a, "alpha", a), dtype=np.float64)


def _slot_terms(C, emb: EmbeddingSpec, j: int, k: int, t: int) -> float:
    acc = 0.0
    for s in range(emb.m):
        pj, pk = j + s * emb.kappa, k + s * emb.kappa
        if pj == t:
            acc += C[pj] - C[pk]
        if pk == t:
            acc -= C[pj] - C[pk]
    return acc


def d_dist_d_alpha(bounds: IntervalSeries, alpha, emb: EmbeddingSpec, j: int, k: int, t: int) -> float:
    """``d ||C_j - C_k|| / d alpha[t]`` for 0-based trajectory indices j, k.

    Returns 0 when the two trajectories coincide (the norm is not
    differentiable there; 0 is a valid subgradient).
    """
    alpha = _alpha(alpha)
    C = convex_combination(bounds, alpha)
    S = emb.check(bounds.T)
    if not (0 <= j < S and 0 <= k < S and 0 <= t < bounds.T):
        raise IndexError("trajectory or time index out of range")
    dvec = np.array([C[j + s * emb.kappa] - C[k + s * emb.kappa] for s in range(emb.m)])
    d = float(np.sqrt(np.sum(dvec * dvec)))
    if d == 0.0:
        return 0.0
    delta = bounds.lower[t] - bounds.upper[t]
    return float(delta * _slot_terms(C, emb, j, k, t) / d)


def _trajectories_containing(t: int, S: int, emb: EmbeddingSpec) -> list:
    out = []
    for s in range(emb.m):
        j = t - s * emb.kappa
        if 0 <= j < S:
            out.append(j)
    return sorted(set(out))


def _univariate_jacobian(bounds: IntervalSeries, alpha: np.ndarray, emb: EmbeddingSpec,
                         eps: float, nu: float, C: np.ndarray, dist: np.ndarray) -> ImageGradient:
    S = dist.shape[0]
    slope = kernels.smooth_rp_slope(dist, eps, nu)
    delta = bounds.lower - bounds.upper
    entries = {}
    for t in range(bounds.T):
        owners = _trajectories_containing(t, S, emb)
        if not owners:
            continue
        pairs = set()
        for j in owners:
            for k in range(S):
                if k != j:
                    pairs.add((min(j, k), max(j, k)))
        pairs = sorted(pairs)
        rows, cols, vals = [], [], []
        for j, k in pairs:
            d = dist[j, k]
            g = 0.0 if d == 0.0 else slope[j, k] * delta[t] * _slot_terms(C, emb, j, k, t) / d
            rows += [j, k]
            cols += [k, j]
            vals += [g, g]
        entries[t] = (np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp), np.array(vals))
    return ImageGradient(entries, S, bounds.T)


def d_rp_smooth_d_alpha(bounds: IntervalSeries, alpha, emb: EmbeddingSpec,
                        thr: ThresholdSpec, nu: float) -> ImageGradient:
    """Sparse Jacobian of the smooth RP of ``convex_combination(bounds, alpha)``.

    A quantile threshold is resolved at the current ``alpha`` and then held
    constant.
    """
    alpha = _alpha(alpha)
    C = convex_combination(bounds, alpha)
    emb.check(bounds.T)
    dist = kernels.trajectory_distances(np.ascontiguousarray(C), emb.m, emb.kappa)
    eps = threshold_from_distances(dist, thr)
    return _univariate_jacobian(bounds, alpha, emb, eps, nu, C, dist)


def _thr_list(thr_per_dim, p: int) -> Sequence[ThresholdSpec]:
    if isinstance(thr_per_dim, ThresholdSpec):
        return [thr_per_dim] * p
    thr = list(thr_per_dim)
    if len(thr) != p:
        raise ShapeMismatch(f"{len(thr)} thresholds for p={p}")
    return thr


def _mv_parts(bounds: MvIntervalSeries, alpha: np.ndarray, emb: EmbeddingSpec, thr_per_dim, nu: float):
    D = convex_combination_mv(bounds, alpha)
    emb.check(bounds.T)
    thr = _thr_list(thr_per_dim, bounds.p)
    dists, epss, imgs = [], [], []
    for j in range(bounds.p):
        dist = kernels.trajectory_distances(np.ascontiguousarray(D[j]), emb.m, emb.kappa)
        eps = threshold_from_distances(dist, thr[j])
        dists.append(dist)
        epss.append(eps)
        imgs.append(smooth_from_distances(dist, eps, nu))
    return D, dists, epss, imgs


def _others_product(imgs, t: int) -> np.ndarray:
    out = np.ones_like(imgs[0])
    for j, img in enumerate(imgs):
        if j != t:
            out = out * img
    return out


def d_jrp_d_alpha(bounds: MvIntervalSeries, alpha, emb: EmbeddingSpec,
                  thr_per_dim, nu: float) -> ImageGradient:
    """Jacobian of the smooth JRP w.r.t. per-dimension weights.

    ``alpha[t]`` only moves dimension t, so the entry is the dimension-t
    derivative times the product of the other dimensions' images.
    """
    alpha = _alpha(alpha)
    D, dists, epss, imgs = _mv_parts(bounds, alpha, emb, thr_per_dim, nu)
    S = dists[0].shape[0]
    entries = {}
    for t in range(bounds.p):
        uni = _univariate_jacobian(bounds.dim(t), np.full(bounds.T, alpha[t]), emb,
                                   epss[t], nu, D[t], dists[t])
        J = uni.dense().sum(axis=0) * _others_product(imgs, t)
        r, c = np.nonzero(~np.eye(S, dtype=bool))
        entries[t] = (r.astype(np.intp), c.astype(np.intp), J[r, c])
    return ImageGradient(entries, S, bounds.p)


def backprop_to_alpha(dL_dR, grad: ImageGradient) -> np.ndarray:
    """Contract a sparse image Jacobian with an upstream gradient ``dL/dR``."""
    G = np.asarray(dL_dR, dtype=np.float64)
    if G.shape != (grad.size, grad.size):
        raise ShapeMismatch(f"dL/dR has shape {G.shape}, image is {grad.size}x{grad.size}")
    out = np.zeros(grad.n_coef)
    for t, (r, c, v) in grad.entries.items():
        out[t] = float(np.dot(v, G[r, c]))
    return out


def backprop_to_alpha_mean(dL_dRs, grads: Sequence[ImageGradient]) -> np.ndarray:
    """Dataset-level gradient: the per-sample contractions averaged over samples."""
    if len(dL_dRs) != len(grads) or not grads:
        raise ShapeMismatch("need one upstream gradient per sample")
    return sum(backprop_to_alpha(g, j) for g, j in zip(dL_dRs, grads)) / len(grads)


# fused route, used in training


def smooth_image(bounds, alpha, emb: EmbeddingSpec, thr, nu: float) -> np.ndarray:
    """Smooth RP (univariate) or JRP (multivariate) image of ``bounds`` at ``alpha``."""
    alpha = _alpha(alpha)
    if isinstance(bounds, MvIntervalSeries):
        _, _, _, imgs = _mv_parts(bounds, alpha, emb, thr, nu)
        out = imgs[0]
        for img in imgs[1:]:
            out = out * img
        return out
    C = np.ascontiguousarray(convex_combination(bounds, alpha))
    emb.check(bounds.T)
    dist = kernels.trajectory_distances(C, emb.m, emb.kappa)
    return smooth_from_distances(dist, threshold_from_distances(dist, thr), nu)


def alpha_gradient(bounds, alpha, emb: EmbeddingSpec, thr, nu: float, dL_dR) -> np.ndarray:
    """``dL/dalpha`` for one sample without materialising the Jacobian."""
    alpha = _alpha(alpha)
    G = np.ascontiguousarray(dL_dR, dtype=np.float64)
    if isinstance(bounds, MvIntervalSeries):
        D, dists, epss, imgs = _mv_parts(bounds, alpha, emb, thr, nu)
        if G.shape != dists[0].shape:
            raise ShapeMismatch(f"dL/dR has shape {G.shape}, image is {dists[0].shape}")
        out = np.zeros(bounds.p)
        for t in range(bounds.p):
            Gt = np.ascontiguousarray(G * _others_product(imgs, t))
            gC = kernels.series_grad(np.ascontiguousarray(D[t]), dists[t], Gt, epss[t], nu, emb.m, emb.kappa)
            out[t] = float(np.dot(gC, bounds.lower[t] - bounds.upper[t]))
        return out
    C = np.ascontiguousarray(convex_combination(bounds, alpha))
    emb.check(bounds.T)
    dist = kernels.trajectory_distances(C, emb.m, emb.kappa)
    if G.shape != dist.shape:
        raise ShapeMismatch(f"dL/dR has shape {G.shape}, image is {dist.shape}")
    eps = threshold_from_distances(dist, thr)
    gC = kernels.series_grad(C, dist, G, eps, nu, emb.m, emb.kappa)
    return gC * (bounds.lower - bounds.upper)
