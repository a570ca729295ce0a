"""Finite-difference audit of every analytic derivative in the toolkit.

The reference side never calls the code under test: images, the CNN forward
pass and the loss are re-implemented here with loops over ``np.longdouble``
arrays, and derivatives are taken with the fourth-order central stencil

    f'(x) ~ (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / (12 h)

Errors are entrywise ``|a - f| / (|f| + floor)`` with ``f`` the difference. Instances whose
ReLU pre-activations or max-pool margins sit within ``kink_margin`` of a
kink are redrawn, since a finite difference across a kink measures nothing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import net as cnn
from .core import IntervalSeries, MvIntervalSeries
from .gradients import alpha_gradient, d_jrp_d_alpha, d_rp_smooth_d_alpha, smooth_image
from .imaging import EmbeddingSpec, ThresholdSpec, threshold_from_distances, distances

LD = np.longdouble
STEP = 1e-5
FLOOR = 1e-8
TOLERANCE = 1e-4


# reference forward passes (longdouble, loop based)


def ref_image(lower, upper, alpha, m: int, kappa: int, eps_per_dim, nu) -> np.ndarray:
    """Smooth RP (``lower`` 1-D) or JRP (``lower`` p x T) of the blended series."""
    lo = np.atleast_2d(np.asarray(lower, dtype=LD))
    up = np.atleast_2d(np.asarray(upper, dtype=LD))
    p, T = lo.shape
    a = np.asarray(alpha, dtype=LD)
    if np.ndim(lower) == 1:
        C = (a * lo[0] + (1 - a) * up[0])[None]
    else:
        C = a[:, None] * lo + (1 - a[:, None]) * up
    S = T - (m - 1) * kappa
    out = np.ones((S, S), dtype=LD)
    half = LD(1) / 2
    for j in range(p):
        for r in range(S):
            for c in range(S):
                acc = LD(0)
                for s in range(m):
                    diff = C[j, r + s * kappa] - C[j, c + s * kappa]
                    acc += diff * diff
                d = np.sqrt(acc)
                out[r, c] *= half * (1 + np.tanh(LD(nu) * (LD(eps_per_dim[j]) - d)))
    return out


def ref_logits(arch, params: List[np.ndarray], image) -> np.ndarray:
    x = np.asarray(image, dtype=LD)[None]
    it = iter(params)
    for spec in arch:
        kind = spec[0]
        if kind == "conv":
            k = next(it)
            co, ci, kh, kw = k.shape
            H, W = x.shape[1] - kh + 1, x.shape[2] - kw + 1
            y = np.zeros((co, H, W), dtype=LD)
            for o in range(co):
                for i in range(ci):
                    for u in range(kh):
                        for v in range(kw):
                            y[o] += k[o, i, u, v] * x[i, u : u + H, v : v + W]
            x = y
        elif kind == "relu":
            x = np.where(x > 0, x, LD(0))
        elif kind == "pool":
            w = int(spec[1])
            c, h, wd = x.shape
            h2, w2 = h // w, wd // w
            x = x[:, : h2 * w, : w2 * w].reshape(c, h2, w, w2, w).max(axis=(2, 4))
        elif kind == "fc":
            W = next(it)
            x = W @ x.reshape(-1)
    return x


def ref_cross_entropy(logits, y: int):
    z = np.asarray(logits, dtype=LD)
    zmax = z.max()
    return np.log(np.exp(z - zmax).sum()) + zmax - z[y]


def fd_derivative(f, x: np.ndarray, i, h: float = STEP):
    """Fourth-order central difference of scalar ``f`` along coordinate ``i`` of ``x``."""
    x = np.array(x, dtype=LD)
    hh = LD(h)

    def at(k):
        xx = x.copy()
        xx[i] += k * hh
        return f(xx)

    return (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * hh)


def rel_err(a, f, floor: float = FLOOR) -> float:
    a = np.asarray(a, dtype=LD)
    f = np.asarray(f, dtype=LD)
    den = np.abs(f) + LD(floor)
    return float(np.max(np.abs(a - f) / den)) if a.size else 0.0


# kink detection


def kink_margin(arch, params, image) -> float:
    """Smallest |ReLU pre-activation| and smallest top-two gap in any pool window."""
    x = np.asarray(image, dtype=np.float64)[None]
    it = iter(params)
    margin = np.inf
    for spec in arch:
        kind = spec[0]
        if kind == "conv":
            k = next(it)
            x = cnn.kernels.conv2d_valid(np.ascontiguousarray(x[None]), k)[0]
        elif kind == "relu":
            margin = min(margin, float(np.min(np.abs(x))))
            x = np.maximum(x, 0.0)
        elif kind == "pool":
            w = int(spec[1])
            c, h, wd = x.shape
            h2, w2 = h // w, wd // w
            blocks = x[:, : h2 * w, : w2 * w].reshape(c, h2, w, w2, w).transpose(0, 1, 3, 2, 4)
            blocks = np.sort(blocks.reshape(c, h2, w2, w * w), axis=-1)
            margin = min(margin, float(np.min(blocks[..., -1] - blocks[..., -2])))
            x = blocks[..., -1]
    return margin


# instances


@dataclass
class Instance:
    sample: object
    alpha: np.ndarray
    emb: EmbeddingSpec
    thr: ThresholdSpec
    nu: float
    eps: List[float]
    model: cnn.CnnModel
    label: int

    @property
    def multivariate(self) -> bool:
        return isinstance(self.sample, MvIntervalSeries)


def _arch_for(S: int):
    if S >= 8:
        return [("conv", 3, 2), ("relu",), ("pool", 2), ("fc",)]
    return [("conv", 2, 2), ("relu",), ("fc",)]


def random_instance(rng: np.random.Generator, max_T: int = 20, kink: float = 1e-3,
                    multivariate: Optional[bool] = None) -> Instance:
    """Draw a random (series, alpha, embedding, threshold, nu, CNN) tuple away from kinks."""
    while True:
        mv = bool(rng.integers(2)) if multivariate is None else multivariate
        m = int(rng.integers(1, 4))
        kappa = int(rng.integers(1, 3))
        nu = float(rng.choice([1.0, 5.0, 10.0]))
        T = int(rng.integers((m - 1) * kappa + 4, max_T + 1))
        p = 3 if mv else 1
        center = np.cumsum(rng.normal(0.0, 0.15, size=(p, T)), axis=1)
        half = rng.uniform(0.02, 0.3, size=(p, T))
        lower, upper = center - half, center + half
        if mv:
            sample = MvIntervalSeries(lower, upper, label=0)
            alpha = rng.uniform(0.05, 0.95, size=p)
        else:
            sample = IntervalSeries(lower[0], upper[0], label=0)
            alpha = rng.uniform(0.05, 0.95, size=T)
        emb = EmbeddingSpec(m, kappa)
        S = emb.n_trajectories(T)
        # quantile thresholds are resolved at the base alpha, then frozen
        if rng.random() < 0.5:
            thr = ThresholdSpec.fixed(float(rng.uniform(0.1, 0.6)))
        else:
            thr = ThresholdSpec.quantile(float(rng.uniform(0.2, 0.8)))
        eps = []
        for j in range(p):
            row = (alpha[j] * lower[j] + (1 - alpha[j]) * upper[j]) if mv else (alpha * lower[0] + (1 - alpha) * upper[0])
            eps.append(threshold_from_distances(distances(row, emb), thr))
        K = int(rng.integers(2, 4))
        model = cnn.build_model(_arch_for(S), S, K, rng=rng)
        img = smooth_image(sample, alpha, emb, thr, nu)
        if kink_margin(model.architecture(), model.params, img) < kink:
            continue
        return Instance(sample, alpha, emb, thr, nu, eps, model, int(rng.integers(K)))


# individual checks


def _ref_image_of(inst: Instance, alpha) -> np.ndarray:
    s = inst.sample
    return ref_image(s.lower, s.upper, alpha, inst.emb.m, inst.emb.kappa, inst.eps, inst.nu)


def check_image_jacobian(inst: Instance) -> float:
    """Analytic dR/dalpha against differences of the reference image."""
    if inst.multivariate:
        J = d_jrp_d_alpha(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu).dense()
    else:
        J = d_rp_smooth_d_alpha(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu).dense()
    fd = np.stack([fd_derivative(lambda a: _ref_image_of(inst, a), inst.alpha, t)
                   for t in range(inst.alpha.size)])
    return rel_err(J, fd)


def _ref_loss_of_image(inst: Instance, params, image):
    return ref_cross_entropy(ref_logits(inst.model.architecture(), params, image), inst.label)


def _analytic_image_grad(inst: Instance, image):
    logits, cache = cnn.forward(inst.model, image)
    _, g = cnn.cross_entropy(logits, [inst.label])
    return cnn.backward(inst.model, cache, g[0])


def check_alpha_gradient(inst: Instance) -> float:
    """Composite dL/dalpha (image -> CNN -> cross-entropy) against differences."""
    img = smooth_image(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu)
    _, dimg = _analytic_image_grad(inst, img)
    ga = alpha_gradient(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu, dimg)
    params = [p.astype(LD) for p in inst.model.params]
    f = lambda a: _ref_loss_of_image(inst, params, _ref_image_of(inst, a))  # noqa: E731
    fd = np.array([fd_derivative(f, inst.alpha, t) for t in range(inst.alpha.size)])
    return rel_err(ga, fd)


def check_param_gradients(inst: Instance, rng: np.random.Generator, per_tensor: int = 12) -> float:
    """Every parameter tensor, on a random subset of its coordinates."""
    img = smooth_image(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu)
    grads, _ = _analytic_image_grad(inst, img)
    params = [p.astype(LD) for p in inst.model.params]
    arch = inst.model.architecture()
    img_ld = img.astype(LD)
    worst = 0.0
    for k, (p, g) in enumerate(zip(params, grads)):
        flat = rng.choice(p.size, size=min(per_tensor, p.size), replace=False)
        for fi in flat:
            idx = np.unravel_index(fi, p.shape)

            def f(pk, k=k):
                ps = list(params)
                ps[k] = pk
                return ref_cross_entropy(ref_logits(arch, ps, img_ld), inst.label)

            worst = max(worst, rel_err(g[idx], fd_derivative(f, p, idx)))
    return worst


def check_image_gradient(inst: Instance, rng: np.random.Generator, n_entries: int = 24) -> float:
    img = smooth_image(inst.sample, inst.alpha, inst.emb, inst.thr, inst.nu)
    _, dimg = _analytic_image_grad(inst, img)
    params = [p.astype(LD) for p in inst.model.params]
    f = lambda x: _ref_loss_of_image(inst, params, x)  # noqa: E731
    flat = rng.choice(img.size, size=min(n_entries, img.size), replace=False)
    worst = 0.0
    for fi in flat:
        idx = np.unravel_index(fi, img.shape)
        worst = max(worst, rel_err(dimg[idx], fd_derivative(f, img, idx)))
    return worst


CHECKS = ("image_jacobian", "alpha_gradient", "param_gradients", "image_gradient")


@dataclass
class GradcheckReport:
    max_rel_err: Dict[str, float] = field(default_factory=lambda: {c: 0.0 for c in CHECKS})
    trials: int = 0
    seconds: float = 0.0
    tolerance: float = TOLERANCE

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values())

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def as_dict(self) -> dict:
        return {"max_rel_err": dict(self.max_rel_err), "worst": self.worst, "trials": self.trials,
                "seconds": self.seconds, "tolerance": self.tolerance, "passed": self.passed}


def run(seed: int = 0, trials: int = 100, max_T: int = 20) -> GradcheckReport:
    """Run every check on ``trials`` random instances (alternating uni/multivariate)."""
    rng = np.random.default_rng(seed)
    rep = GradcheckReport()
    t0 = time.perf_counter()
    for i in range(trials):
        inst = random_instance(rng, max_T=max_T, multivariate=bool(i % 2))
        errs = {
            "image_jacobian": check_image_jacobian(inst),
            "alpha_gradient": check_alpha_gradient(inst),
            "param_gradients": check_param_gradients(inst, rng),
            "image_gradient": check_image_gradient(inst, rng),
        }
        for k, v in errs.items():
            rep.max_rel_err[k] = max(rep.max_rel_err[k], v)
        rep.trials += 1
    rep.seconds = time.perf_counter() - t0
    return rep
