"""A small convolutional classifier with hand-written backpropagation.

Layers are stride-1 valid convolutions (no bias), ReLU, non-overlapping max
pooling and a final bias-free fully connected map to ``K`` logits. Batches
are laid out ``(N, C, H, W)``; a single ``S x S`` image is accepted too.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import CheckpointError, MissingCache, ShapeMismatch


class Conv:
    kind = "conv"

    def __init__(self, out_maps: int, in_maps: int, size: int):
        self.kernel = np.zeros((out_maps, in_maps, size, size))

    @property
    def params(self):
        return [self.kernel]

    def out_shape(self, shape):
        c, h, w = shape
        k = self.kernel.shape[2]
        if c != self.kernel.shape[1] or h < k or w < k:
            raise ShapeMismatch(f"conv {self.kernel.shape} cannot take input {shape}")
        return (self.kernel.shape[0], h - k + 1, w - k + 1)

    def forward(self, x):
        return kernels.conv2d_valid(x, self.kernel), x

    def backward(self, cache, g):
        gk, gx = kernels.conv2d_backward(cache, self.kernel, np.ascontiguousarray(g))
        return [gk], gx


class ReLU:
    kind = "relu"
    params: list = []

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        mask = x > 0.0
        return x * mask, mask

    def backward(self, cache, g):
        return [], g * cache


class MaxPool:
    kind = "pool"
    params: list = []

    def __init__(self, window: int):
        self.window = int(window)

    def out_shape(self, shape):
        c, h, w = shape
        if h < self.window or w < self.window:
            raise ShapeMismatch(f"pool window {self.window} larger than input {shape}")
        return (c, h // self.window, w // self.window)

    def forward(self, x):
        out, idx = kernels.maxpool_forward(np.ascontiguousarray(x), self.window)
        return out, (idx, x.shape)

    def backward(self, cache, g):
        idx, shape = cache
        return [], kernels.maxpool_backward(np.ascontiguousarray(g), idx, self.window, shape)


class FullyConnected:
    kind = "fc"

    def __init__(self, n_out: int, n_in: int):
        self.weight = np.zeros((n_out, n_in))

    @property
    def params(self):
        return [self.weight]

    def out_shape(self, shape):
        if int(np.prod(shape)) != self.weight.shape[1]:
            raise ShapeMismatch(f"fc expects {self.weight.shape[1]} inputs, got {shape}")
        return (self.weight.shape[0],)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        return flat @ self.weight.T, (flat, x.shape)

    def backward(self, cache, g):
        flat, shape = cache
        return [g.T @ flat], (g @ self.weight).reshape(shape)


@dataclass
class Cache:
    entries: list
    batched: bool


class CnnModel:
    """Ordered layer stack plus geometry (square ``size x size`` input, ``n_classes`` logits)."""

    def __init__(self, layers: Sequence, size: int, n_classes: int):
        self.layers = list(layers)
        self.size = int(size)
        self.n_classes = int(n_classes)
        shape = (1, self.size, self.size)
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (self.n_classes,):
            raise ShapeMismatch(f"network output shape {shape} != ({self.n_classes},)")

    @property
    def params(self) -> List[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params():
            raise ShapeMismatch(f"{vec.size} values for {self.n_params()} parameters")
        i = 0
        for p in self.params:
            p[...] = vec[i : i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "CnnModel":
        clone = build_model(self.architecture(), self.size, self.n_classes)
        clone.set_flat(self.get_flat())
        return clone

    def architecture(self) -> list:
        arch = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                arch.append(("conv", layer.kernel.shape[2], layer.kernel.shape[0]))
            elif isinstance(layer, ReLU):
                arch.append(("relu",))
            elif isinstance(layer, MaxPool):
                arch.append(("pool", layer.window))
            elif isinstance(layer, FullyConnected):
                arch.append(("fc",))
        return arch

    def forward(self, images) -> Tuple[np.ndarray, Cache]:
        return forward(self, images)

    def backward(self, cache: Cache, dL_dlogits):
        return backward(self, cache, dL_dlogits)

    def predict(self, images) -> np.ndarray:
        logits, _ = forward(self, images)
        return np.argmax(np.atleast_2d(logits), axis=1)


DEFAULT_ARCHITECTURE = [
    ("conv", 5, 8), ("relu",), ("pool", 2),
    ("conv", 3, 16), ("relu",), ("pool", 2),
    ("fc",),
]


def build_model(architecture, size: int, n_classes: int, rng: Optional[np.random.Generator] = None) -> CnnModel:
    """Instantiate ``architecture`` for ``size x size`` inputs.

    ``architecture`` lists ``("conv", kernel_size, n_maps)``, ``("relu",)``,
    ``("pool", window)`` and a final ``("fc",)``. With ``rng`` the weights are
    drawn uniformly from ``[-b, b]``, ``b = sqrt(6 / fan_in)`` for
    convolutions and ``1 / sqrt(fan_in)`` for the output layer; otherwise they
    are zero.
    """
    layers = []
    shape = (1, int(size), int(size))
    for spec in architecture:
        kind = spec[0]
        if kind == "conv":
            layer = Conv(int(spec[2]), shape[0], int(spec[1]))
            fan_in = shape[0] * int(spec[1]) ** 2
            if rng is not None:
                b = math.sqrt(6.0 / fan_in)
                layer.kernel[...] = rng.uniform(-b, b, size=layer.kernel.shape)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "pool":
            layer = MaxPool(int(spec[1]))
        elif kind == "fc":
            fan_in = int(np.prod(shape))
            layer = FullyConnected(int(n_classes), fan_in)
            if rng is not None:
                b = 1.0 / math.sqrt(fan_in)
                layer.weight[...] = rng.uniform(-b, b, size=layer.weight.shape)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        shape = layer.out_shape(shape)
        layers.append(layer)
    return CnnModel(layers, size, n_classes)


def forward(model: CnnModel, images):
    """Logits for one image (``K``) or a batch (``N x K``), plus the activation cache."""
    x = np.asarray(images, dtype=np.float64)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (model.size, model.size):
        raise ShapeMismatch(f"expected {model.size}x{model.size} image(s), got {np.shape(images)}")
    x = np.ascontiguousarray(x[:, None, :, :])
    caches = []
    for layer in model.layers:
        x, c = layer.forward(x)
        caches.append(c)
    return (x if batched else x[0]), Cache(caches, batched)


def backward(model: CnnModel, cache: Optional[Cache], dL_dlogits):
    """Parameter gradients (declaration order) and ``dL/dimage``."""
    if cache is None or len(cache.entries) != len(model.layers):
        raise MissingCache("backward needs the cache from a forward pass of this model")
    g = np.asarray(dL_dlogits, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    grads: List[np.ndarray] = []
    for layer, c in zip(reversed(model.layers), reversed(cache.entries)):
        pg, g = layer.backward(c, g)
        grads = pg + grads
    dimg = g[:, 0]
    return grads, (dimg if cache.batched else dimg[0])


# losses


def margin(logits, y: int) -> float:
    """True-class logit minus the largest competing logit."""
    v = np.asarray(logits, dtype=np.float64)
    if v.size < 2:
        raise ValueError("margin needs at least two classes")
    return float(v[y] - np.max(np.delete(v, y)))


def ramp_loss(x, gamma: float):
    """0 below ``-gamma``, ``1 + x/gamma`` on ``[-gamma, 0]``, 1 above 0."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.clip(1.0 + x / gamma, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 1
    batch_size: int = 16
    loss: str = "cross_entropy"
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate >= 0, batch_size >= 1 and epochs >= 0 required")
        if self.loss not in ("cross_entropy", "ramp"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def cross_entropy(logits, y):
    """Per-sample softmax cross-entropy and its gradient w.r.t. the logits."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    losses = np.log(s[:, 0]) - z[rows, y]
    grad = e / s
    grad[rows, y] -= 1.0
    return losses, grad


def ramp_margin_loss(logits, y, gamma: float):
    """Per-sample ramp loss at ``-margin`` with its subgradient."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    rows = np.arange(z.shape[0])
    masked = z.copy()
    masked[rows, y] = -np.inf
    rival = np.argmax(masked, axis=1)
    x = z[rows, rival] - z[rows, y]
    losses = np.clip(1.0 + x / gamma, 0.0, 1.0)
    grad = np.zeros_like(z)
    active = (x >= -gamma) & (x <= 0.0)
    grad[rows[active], rival[active]] = 1.0 / gamma
    grad[rows[active], y[active]] = -1.0 / gamma
    return losses, grad


def batch_loss(logits, y, cfg: TrainConfig):
    if cfg.loss == "ramp":
        return ramp_margin_loss(logits, y, cfg.gamma)
    return cross_entropy(logits, y)


def loss_and_grad(model: CnnModel, image, y: int, cfg: TrainConfig):
    """Loss of one image and ``dL/dlogits``."""
    logits, _ = forward(model, image)
    losses, grad = batch_loss(logits, [y], cfg)
    return float(losses[0]), grad[0]


def dataset_loss(model: CnnModel, images, labels, cfg: TrainConfig, chunk: int = 64) -> float:
    total = 0.0
    n = len(labels)
    for i in range(0, n, chunk):
        logits, _ = forward(model, images[i : i + chunk])
        total += float(batch_loss(logits, labels[i : i + chunk], cfg)[0].sum())
    return total / n


def batch_gradients(model: CnnModel, images, labels, cfg: TrainConfig):
    """Mean loss, mean parameter gradients and per-sample ``dL_i/dimage_i``."""
    logits, cache = forward(model, images)
    losses, g = batch_loss(logits, labels, cfg)
    n = len(labels)
    pgrads, dimg = backward(model, cache, g / n)
    return float(losses.mean()), pgrads, dimg * n


def sgd_epoch(model: CnnModel, images, labels, cfg: TrainConfig, rng: np.random.Generator):
    """One pass of shuffled mini-batch SGD, in place. Returns the mean sample loss."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    n = labels.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        loss, grads, _ = batch_gradients(model, images[idx], labels[idx], cfg)
        total += loss * idx.size
        if cfg.learning_rate:
            for p, g in zip(model.params, grads):
                p -= cfg.learning_rate * g
    return total / n


# checkpoint format

MAGIC = b"IVRPCNN\x00"
VERSION = 1
_KIND_CODES = {"conv": 1, "relu": 2, "pool": 3, "fc": 4}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def checkpoint_bytes(model: CnnModel) -> bytes:
    """Serialise as magic, version, geometry header, then little-endian float64 parameters."""
    parts = [MAGIC, struct.pack("<IIII", VERSION, model.size, model.n_classes, len(model.layers))]
    for layer in model.layers:
        if isinstance(layer, Conv):
            o, i, k, _ = layer.kernel.shape
            parts.append(struct.pack("<BIII", 1, o, i, k))
        elif isinstance(layer, ReLU):
            parts.append(struct.pack("<BIII", 2, 0, 0, 0))
        elif isinstance(layer, MaxPool):
            parts.append(struct.pack("<BIII", 3, layer.window, 0, 0))
        else:
            o, i = layer.weight.shape
            parts.append(struct.pack("<BIII", 4, o, i, 0))
    flat = model.get_flat()
    parts.append(struct.pack("<Q", flat.size))
    parts.append(flat.astype("<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(blob: bytes) -> CnnModel:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    try:
        version, size, n_classes, n_layers = struct.unpack_from("<IIII", blob, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 24
        arch = []
        for _ in range(n_layers):
            code, a, b, c = struct.unpack_from("<BIII", blob, off)
            off += 13
            kind = _CODE_KINDS.get(code)
            if kind == "conv":
                arch.append(("conv", c, a))
            elif kind == "relu":
                arch.append(("relu",))
            elif kind == "pool":
                arch.append(("pool", a))
            elif kind == "fc":
                arch.append(("fc",))
            else:
                raise CheckpointError(f"unknown layer code {code}")
        (count,) = struct.unpack_from("<Q", blob, off)
        off += 8
        payload = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if off + 8 * count != len(blob):
        raise CheckpointError("checkpoint length does not match header")
    try:
        model = build_model(arch, size, n_classes)
        model.set_flat(payload.astype(np.float64))
    except ShapeMismatch as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from None
    return model


def save_checkpoint(model: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path) -> CnnModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
