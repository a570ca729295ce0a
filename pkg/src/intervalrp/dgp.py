"""Seeded synthetic interval-valued series.

Center/range pairs ``x_t = (x^c_t, x^r_t)`` follow one of three bivariate
processes driven by residuals ``eps_t ~ N(0, Sigma)``,
``Sigma = [[1, rho/2], [rho/2, 1/4]]``:

* DGP1: ``x_t = sum_{l=1}^{L} pi_l Phi z_{t,l} + eps_t``, ``pi_l = l^-2/sqrt(3)``,
  ``z_{t,1} = (1, 1)``, ``z_{t,l} ~ N(0, Sigma)`` for ``l >= 2``;
* DGP2: ``x_t = Phi x_{t-1} + eps_t - Gamma eps_{t-1}`` (after burn-in);
* DGP3: ``x_t = eps_t - Gamma eps_{t-1}``.

Bounds are rebuilt as ``center -/+ max(range, 0)``.

Random streams: sample ``i`` of class ``c`` draws from
``np.random.default_rng([seed, tag, c, i])`` where ``tag`` identifies the
process (1, 2, 3) or, for multivariate scenarios, ``1000*dgp + dim``.
Every sample therefore owns an independent PCG64 stream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np

from .core import CenterRange, IntervalSeries, MvIntervalSeries, from_center_range

PHI = np.array([[0.2, -0.1], [0.1, 0.2]])
GAMMA = np.array([[-0.6, 0.3], [0.3, 0.6]])
DEFAULT_RHOS = (-0.9, -0.5, 0.0, 0.3, 0.7)
DEFAULT_TRUNCATION = 100
BURN_IN = 200


class Dgp(enum.IntEnum):
    DGP1 = 1
    DGP2 = 2
    DGP3 = 3


class Scenario(enum.Enum):
    C1 = "c1"
    C2 = "c2"


@dataclass(frozen=True)
class DgpSpec:
    kind: Dgp
    rho: float
    length: int
    truncation: int = DEFAULT_TRUNCATION
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Dgp(self.kind))
        if self.length < 2:
            raise ValueError("length must be >= 2")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")
        if abs(self.rho) > 1.0:
            raise ValueError("|rho| must be <= 1")


@dataclass
class LabeledDataset:
    samples: List[Union[IntervalSeries, MvIntervalSeries]]
    classes: int
    class_map: Dict[str, int]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.intp)

    def __len__(self):
        return len(self.samples)


def residual_cov(rho: float) -> np.ndarray:
    return np.array([[1.0, rho / 2.0], [rho / 2.0, 0.25]])


def residual_factor(rho: float) -> np.ndarray:
    """Lower Cholesky factor of the residual covariance, in closed form.

    At ``|rho| = 1`` the second diagonal entry is 0 and the factor is the
    rank-one square root, so no special case is needed.
    """
    if abs(rho) > 1.0:
        raise ValueError("|rho| must be <= 1")
    return np.array([[1.0, 0.0], [rho / 2.0, 0.5 * math.sqrt(max(1.0 - rho * rho, 0.0))]])


def sample_residuals(rho: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """``T`` i.i.d. draws of ``(eps_c, eps_r)`` as a ``T x 2`` array."""
    L = residual_factor(rho)
    return rng.standard_normal((T, 2)) @ L.T


def pi_weights(L: int) -> np.ndarray:
    l = np.arange(1, L + 1, dtype=np.float64)
    return l ** -2 / math.sqrt(3.0)


def dgp1_path(eps: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``eps``: T x 2; ``z``: T x (L-1) x 2 random regressors for ``l >= 2``."""
    L = z.shape[1] + 1
    pis = pi_weights(L)
    const = pis[0] * (PHI @ np.ones(2))
    random_part = np.einsum("l,tlj,ij->ti", pis[1:], z, PHI) if L > 1 else 0.0
    return const + random_part + eps


def dgp2_path(eps: np.ndarray, burn_in: int = 0) -> np.ndarray:
    """VARMA(1,1) from ``x_0 = 0``, ``eps_0 = 0``; the first ``burn_in`` points are dropped."""
    n = eps.shape[0]
    x = np.zeros((n, 2))
    prev_x = np.zeros(2)
    prev_e = np.zeros(2)
    for t in range(n):
        prev_x = PHI @ prev_x + eps[t] - GAMMA @ prev_e
        prev_e = eps[t]
        x[t] = prev_x
    return x[burn_in:]


def dgp3_path(eps: np.ndarray) -> np.ndarray:
    """MA(1); ``eps`` holds T+1 rows, the first being ``eps_0``."""
    return eps[1:] - eps[:-1] @ GAMMA.T


def simulate_center_range(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    T = spec.length
    if spec.kind is Dgp.DGP1:
        eps = sample_residuals(spec.rho, T, rng)
        z = sample_residuals(spec.rho, T * (spec.truncation - 1), rng).reshape(T, spec.truncation - 1, 2)
        return dgp1_path(eps, z)
    if spec.kind is Dgp.DGP2:
        return dgp2_path(sample_residuals(spec.rho, BURN_IN + T, rng), BURN_IN)
    return dgp3_path(sample_residuals(spec.rho, T + 1, rng))


def _to_interval(x: np.ndarray, label=None) -> IntervalSeries:
    return from_center_range(CenterRange(x[:, 0], x[:, 1]), clamp=True, label=label)


def generate(spec: DgpSpec, rng=None, label=None) -> IntervalSeries:
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    return _to_interval(simulate_center_range(spec, rng), label)


def gen_dgp1(spec: DgpSpec, rng=None, label=None) -> IntervalSeries:
    assert spec.kind is Dgp.DGP1
    return generate(spec, rng, label)


def gen_dgp2(spec: DgpSpec, rng=None, label=None) -> IntervalSeries:
    assert spec.kind is Dgp.DGP2
    return generate(spec, rng, label)


def gen_dgp3(spec: DgpSpec, rng=None, label=None) -> IntervalSeries:
    assert spec.kind is Dgp.DGP3
    return generate(spec, rng, label)


def sample_rng(seed: int, tag: int, cls: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, tag, cls, index])


def build_dataset(kind, rhos: Sequence[float] = DEFAULT_RHOS, per_class: int = 500, T: int = 150,
                  seed: int = 0, truncation: int = DEFAULT_TRUNCATION) -> LabeledDataset:
    """One class per entry of ``rhos``, ``per_class`` univariate samples each."""
    kind = Dgp(kind)
    rhos = list(rhos)
    if not rhos or per_class < 1:
        raise ValueError("need at least one rho and per_class >= 1")
    samples = []
    for c, rho in enumerate(rhos):
        spec = DgpSpec(kind, rho, T, truncation, seed)
        for i in range(per_class):
            samples.append(generate(spec, sample_rng(seed, int(kind), c, i), label=c))
    return LabeledDataset(samples, len(rhos), {repr(float(r)): c for c, r in enumerate(rhos)})


def build_multivariate(scenario, rhos: Sequence[float] = DEFAULT_RHOS, per_class: int = 500,
                       T: int = 150, seed: int = 0, truncation: int = DEFAULT_TRUNCATION) -> LabeledDataset:
    """C1: classes are DGPs, dimensions are rhos. C2: classes are rhos, dimensions are DGPs."""
    scenario = Scenario(scenario)
    rhos = list(rhos)
    if not rhos or per_class < 1:
        raise ValueError("need at least one rho and per_class >= 1")
    if scenario is Scenario.C1:
        class_keys = [(d,) for d in Dgp]
        dims = lambda key: [(key[0], r) for r in rhos]  # noqa: E731
        class_map = {d.name: c for c, d in enumerate(Dgp)}
    else:
        class_keys = [(r,) for r in rhos]
        dims = lambda key: [(d, key[0]) for d in Dgp]  # noqa: E731
        class_map = {repr(float(r)): c for c, r in enumerate(rhos)}
    samples = []
    for c, key in enumerate(class_keys):
        for i in range(per_class):
            rows = []
            for j, (d, rho) in enumerate(dims(key)):
                spec = DgpSpec(d, rho, T, truncation, seed)
                rng = sample_rng(seed, 1000 * int(d) + j, c, i)
                rows.append(simulate_center_range(spec, rng))
            X = np.stack(rows)  # p x T x 2
            r = np.maximum(X[:, :, 1], 0.0)
            samples.append(MvIntervalSeries(X[:, :, 0] - r, X[:, :, 0] + r, label=c))
    return LabeledDataset(samples, len(class_keys), class_map)
