"""ADMM joint estimation of the CNN weights and the combination coefficients.

The constrained problem ``min L(alpha, theta) s.t. alpha in [0,1]^d`` is split
with an auxiliary ``beta`` carrying the box constraint and a scaled dual
``u``. One outer iteration runs

* theta step: SGD epochs on the images at the current ``alpha``;
* alpha step: gradient steps on ``L(alpha, theta) + rho/2 ||alpha - beta + u||^2``;
* beta step: ``beta = clip(alpha + u, 0, 1)``;
* u step: ``u += tau * (alpha - beta)``.

The loop itself (:func:`run_admm`) only needs an object with ``theta_step``
and ``risk_and_grad``, so it can be exercised on problems with known
solutions.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import net as cnn
from .core import MvIntervalSeries
from .errors import NonFinite
from .gradients import alpha_gradient, smooth_image
from .imaging import PI_OVER_18, EmbeddingSpec, ThresholdSpec

log = logging.getLogger(__name__)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass
class AdmmConfig:
    rho: float = 1.0
    tau: float = 1.0
    outer_iters: int = 10
    inner_theta_epochs: int = 3
    inner_alpha_steps: int = 10
    alpha_lr: float = 1.0
    tol_primal: float = 1e-3
    tol_dual: float = 1e-3
    backtrack: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if not 0.0 < self.tau <= GOLDEN + 1e-15:
            raise ValueError("tau must lie in (0, (1+sqrt 5)/2]")
        if self.outer_iters < 0 or self.inner_theta_epochs < 0 or self.inner_alpha_steps < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.alpha_lr < 0 or not self.tol_primal > 0 or not self.tol_dual > 0:
            raise ValueError("alpha_lr >= 0 and positive tolerances required")
        if not self.backtrack and self.rho * self.alpha_lr >= 2.0:
            # the proximal term alone makes plain gradient steps expand
            warnings.warn(f"rho * alpha_lr = {self.rho * self.alpha_lr:g} >= 2: alpha steps diverge",
                          RuntimeWarning, stacklevel=3)


@dataclass
class ImagingConfig:
    emb: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    thr: ThresholdSpec = field(default_factory=lambda: ThresholdSpec.fixed(PI_OVER_18))
    nu: float = 10.0


@dataclass
class IterRecord:
    iter: int
    objective: float
    primal_residual: float
    dual_residual: float
    alpha_min: float
    alpha_max: float

    def as_dict(self) -> dict:
        return {
            "iter": self.iter,
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
        }


@dataclass
class AdmmState:
    theta: object
    alpha: np.ndarray
    beta: np.ndarray
    u: np.ndarray
    history: List[IterRecord] = field(default_factory=list)

    def __post_init__(self):
        if not (self.alpha.shape == self.beta.shape == self.u.shape):
            raise ValueError("alpha, beta and u must share a shape")


def beta_step(alpha, u) -> np.ndarray:
    """Projection of ``alpha + u`` onto the unit box."""
    return np.clip(np.asarray(alpha) + np.asarray(u), 0.0, 1.0)


def u_step(u, alpha, beta, tau: float) -> np.ndarray:
    return np.asarray(u) + tau * (np.asarray(alpha) - np.asarray(beta))


def penalty(alpha, beta, u, rho: float) -> float:
    """Scaled-form coupling ``rho/2 ||alpha - beta + u||^2 - rho/2 ||u||^2``."""
    r = np.asarray(alpha) - np.asarray(beta) + np.asarray(u)
    return 0.5 * rho * float(r @ r) - 0.5 * rho * float(np.dot(u, u))


def augmented_lagrangian_value(risk: float, alpha, beta, u, rho: float) -> float:
    beta = np.asarray(beta)
    if np.any(beta < 0.0) or np.any(beta > 1.0):
        return math.inf
    return risk + penalty(alpha, beta, u, rho)


def augmented_lagrangian(problem, state: AdmmState, cfg: AdmmConfig) -> float:
    """Scaled-form augmented Lagrangian of ``problem`` at the current state."""
    risk, _ = problem.risk_and_grad(state.alpha, need_grad=False)
    return augmented_lagrangian_value(risk, state.alpha, state.beta, state.u, cfg.rho)


def theta_step(problem, state: AdmmState, cfg: AdmmConfig) -> None:
    """``inner_theta_epochs`` SGD epochs on the images at ``state.alpha``."""
    problem.theta_step(state.alpha, cfg.inner_theta_epochs)


def alpha_step(problem, state: AdmmState, cfg: AdmmConfig) -> np.ndarray:
    """Truncated gradient descent on the alpha subproblem (no projection).

    With ``cfg.backtrack`` each step starts at ``alpha_lr`` and is halved
    (up to 10 times) until the subproblem objective decreases sufficiently;
    the loop stops early when no step is accepted.
    """
    alpha = state.alpha.copy()
    if cfg.alpha_lr == 0:
        return alpha

    def objective(a):
        risk, _ = problem.risk_and_grad(a, need_grad=False)
        r = a - state.beta + state.u
        return risk + 0.5 * cfg.rho * float(r @ r)

    for _ in range(cfg.inner_alpha_steps):
        _, g = problem.risk_and_grad(alpha)
        g = g + cfg.rho * (alpha - state.beta + state.u)
        if not cfg.backtrack:
            alpha = alpha - cfg.alpha_lr * g
            continue
        f0 = objective(alpha)
        gg = float(g @ g)
        eta = cfg.alpha_lr
        for _ in range(10):
            trial = alpha - eta * g
            if objective(trial) <= f0 - 1e-4 * eta * gg:
                alpha = trial
                break
            eta *= 0.5
        else:
            break
    return alpha


def _check_finite(*arrays, what: str):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite(f"non-finite value in {what}")


def run_admm(problem, state: AdmmState, cfg: AdmmConfig,
             callback: Optional[Callable[[IterRecord], None]] = None,
             learn_alpha: bool = True) -> AdmmState:
    """Iterate theta/alpha/beta/u steps until both residuals are below tolerance.

    With ``learn_alpha=False`` only theta steps run (alpha, beta, u stay put),
    which gives the fixed-representation baseline under the same theta budget.
    """
    for s in range(cfg.outer_iters):
        theta_step(problem, state, cfg)
        if learn_alpha:
            alpha = alpha_step(problem, state, cfg)
            beta = beta_step(alpha, state.u)
            u = u_step(state.u, alpha, beta, cfg.tau)
        else:
            alpha, beta, u = state.alpha, state.beta, state.u
        dual = cfg.rho * float(np.linalg.norm(beta - state.beta))
        primal = float(np.linalg.norm(alpha - beta))
        state.alpha, state.beta, state.u = alpha, beta, u
        risk, _ = problem.risk_and_grad(alpha, need_grad=False)
        objective = augmented_lagrangian_value(risk, alpha, beta, u, cfg.rho)
        _check_finite(alpha, beta, u, np.array([objective]), what=f"iteration {s}")
        problem.check_finite()
        rec = IterRecord(s, objective, primal, dual, float(np.min(alpha)), float(np.max(alpha)))
        state.history.append(rec)
        log.info("admm iter %d objective=%.6g primal=%.3g dual=%.3g", s, objective, primal, dual)
        if callback is not None:
            callback(rec)
        if learn_alpha and primal < cfg.tol_primal and dual < cfg.tol_dual:
            break
    return state


class ImageProblem:
    """Classification problem over interval series imaged with smooth RP/JRP."""

    def __init__(self, bounds: Sequence, labels, model: cnn.CnnModel, imaging: ImagingConfig,
                 train_cfg: cnn.TrainConfig, rng: np.random.Generator, chunk: int = 64):
        self.bounds = list(bounds)
        self.labels = np.asarray(labels, dtype=np.intp)
        self.model = model
        self.imaging = imaging
        self.train_cfg = train_cfg
        self.rng = rng
        self.chunk = chunk
        self._cache_key = None
        self._cache_images = None

    def images(self, alpha) -> np.ndarray:
        alpha = np.ascontiguousarray(alpha, dtype=np.float64)
        key = hashlib.sha1(alpha.tobytes()).hexdigest()
        if key != self._cache_key:
            im = self.imaging
            self._cache_images = np.stack(
                [smooth_image(b, alpha, im.emb, im.thr, im.nu) for b in self.bounds])
            self._cache_key = key
        return self._cache_images

    def theta_step(self, alpha, epochs: int) -> None:
        imgs = self.images(alpha)
        for _ in range(epochs):
            cnn.sgd_epoch(self.model, imgs, self.labels, self.train_cfg, self.rng)

    def risk_and_grad(self, alpha, need_grad: bool = True):
        """Mean training loss at ``alpha`` and (optionally) its gradient in ``alpha``."""
        imgs = self.images(alpha)
        n = len(self.bounds)
        total = 0.0
        grad = np.zeros_like(np.asarray(alpha, dtype=np.float64))
        im = self.imaging
        for start in range(0, n, self.chunk):
            sl = slice(start, start + self.chunk)
            logits, cache = cnn.forward(self.model, imgs[sl])
            losses, g = cnn.batch_loss(logits, self.labels[sl], self.train_cfg)
            total += float(losses.sum())
            if need_grad:
                _, dimg = cnn.backward(self.model, cache, g)
                for b, G in zip(self.bounds[sl], dimg):
                    grad += alpha_gradient(b, alpha, im.emb, im.thr, im.nu, G)
        return total / n, grad / n

    def check_finite(self) -> None:
        for p in self.model.params:
            _check_finite(p, what="network parameters")


def coefficient_length(bounds: Sequence) -> int:
    b0 = bounds[0]
    return b0.p if isinstance(b0, MvIntervalSeries) else b0.T


@dataclass
class TrainResult:
    model: cnn.CnnModel
    beta: np.ndarray
    alpha: np.ndarray
    history: List[IterRecord]
    final_loss: float


def train(bounds: Sequence, labels, imaging: ImagingConfig, train_cfg: cnn.TrainConfig,
          admm_cfg: AdmmConfig, seed: int, architecture=None, n_classes: Optional[int] = None,
          freeze_alpha=None,
          callback: Optional[Callable[[IterRecord], None]] = None) -> TrainResult:
    """Fit network and coefficients jointly.

    Starts from ``alpha = beta = 0.5`` (center series) and ``u = 0``; the
    reported coefficients are ``beta``. ``freeze_alpha`` (a scalar or a
    vector) fixes the coefficients and trains the network only.
    """
    labels = np.asarray(labels, dtype=np.intp)
    K = int(n_classes if n_classes is not None else labels.max() + 1)
    dim = coefficient_length(bounds)
    S = imaging.emb.check(bounds[0].T)
    rng = np.random.default_rng(seed)
    model = cnn.build_model(architecture or cnn.DEFAULT_ARCHITECTURE, S, K, rng=rng)
    init = np.full(dim, 0.5)
    if freeze_alpha is not None:
        init = np.broadcast_to(np.asarray(freeze_alpha, dtype=np.float64), (dim,)).copy()
    state = AdmmState(model, init, init.copy(), np.zeros(dim))
    problem = ImageProblem(bounds, labels, model, imaging, train_cfg, rng)
    run_admm(problem, state, admm_cfg, callback=callback, learn_alpha=freeze_alpha is None)
    final_loss, _ = problem.risk_and_grad(state.beta, need_grad=False)
    return TrainResult(model, state.beta.copy(), state.alpha.copy(), state.history, final_loss)
