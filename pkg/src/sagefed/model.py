"""Hand-differentiated MLP classifier on flat parameter vectors.

All operations are pure functions of (params, spec, inputs): no hidden
state, no framework. Parameters live in a single flat float64 array so
client/server exchange and aggregation reduce to vector arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

LOG_FLOOR = 1e-12  # clamp for log-probabilities, keeps losses finite

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor: input_dim -> hidden_dims -> num_classes.

    Empty hidden_dims gives a linear (softmax regression) model.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (32,)
    num_classes: int = 10
    activation: str = "tanh"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {self.hidden_dims}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {_ACTIVATIONS}")


@dataclass(frozen=True)
class LayoutBlock:
    name: str
    shape: tuple[int, ...]
    start: int
    stop: int


@lru_cache(maxsize=None)
def layout_for(spec: ModelSpec) -> tuple[LayoutBlock, ...]:
    """Index ranges of each weight/bias block inside the flat vector."""
    blocks: list[LayoutBlock] = []
    offset = 0
    dims = (spec.input_dim, *spec.hidden_dims, spec.num_classes)
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        for name, shape in ((f"W{i}", (fan_in, fan_out)), (f"b{i}", (fan_out,))):
            size = int(np.prod(shape))
            blocks.append(LayoutBlock(name, shape, offset, offset + size))
            offset += size
    return tuple(blocks)


def num_params(spec: ModelSpec) -> int:
    return layout_for(spec)[-1].stop


@dataclass
class ParameterVector:
    """Flat model weights plus the layout that maps blocks into them."""

    values: np.ndarray
    layout: tuple[LayoutBlock, ...] = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.layout[-1].stop:
            raise ValueError(
                f"parameter vector of size {self.values.size} does not match layout size {self.layout[-1].stop}"
            )

    def block(self, name: str) -> np.ndarray:
        for b in self.layout:
            if b.name == name:
                return self.values[b.start : b.stop].reshape(b.shape)
        raise KeyError(name)

    def blocks(self) -> list[np.ndarray]:
        return [self.values[b.start : b.stop].reshape(b.shape) for b in self.layout]

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy(), self.layout)

    def same_layout(self, other: "ParameterVector") -> bool:
        return self.layout == other.layout


def init_params(spec: ModelSpec, seed: int) -> ParameterVector:
    """Deterministic init: weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    layout = layout_for(spec)
    values = np.zeros(layout[-1].stop)
    for b in layout:
        if b.name.startswith("W"):
            bound = 1.0 / np.sqrt(b.shape[0])
            values[b.start : b.stop] = rng.uniform(-bound, bound, b.stop - b.start)
    return ParameterVector(values, layout)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max subtraction)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _forward_cached(params: ParameterVector, spec: ModelSpec, X: np.ndarray):
    """Batched forward pass keeping pre/post activations for backprop."""
    if params.layout != layout_for(spec):
        raise ValueError("parameter layout does not match model spec")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"expected inputs of dimension {spec.input_dim}, got shape {X.shape}")
    blocks = params.blocks()
    weights = blocks[0::2]
    biases = blocks[1::2]
    h = X
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [X]
    for W, b in zip(weights[:-1], biases[:-1]):
        z = h @ W + b
        h = _activate(z, spec.activation)
        pre.append(z)
        post.append(h)
    logits = h @ weights[-1] + biases[-1]
    return softmax(logits), pre, post


def predict_batch(params: ParameterVector, spec: ModelSpec, X: np.ndarray) -> np.ndarray:
    """Class-probability matrix, one row per input row."""
    probs, _, _ = _forward_cached(params, spec, X)
    return probs


def forward(params: ParameterVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Probability vector for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    return predict_batch(params, spec, x[None, :])[0]


def _backprop(
    params: ParameterVector,
    spec: ModelSpec,
    dlogits: np.ndarray,
    pre: list[np.ndarray],
    post: list[np.ndarray],
) -> ParameterVector:
    """Assemble the flat gradient from the output-layer delta."""
    blocks = params.blocks()
    weights = blocks[0::2]
    n_layers = len(weights)
    grad = np.zeros_like(params.values)
    layout = params.layout
    delta = dlogits
    for i in range(n_layers - 1, -1, -1):
        wb, bb = layout[2 * i], layout[2 * i + 1]
        grad[wb.start : wb.stop] = (post[i].T @ delta).ravel()
        grad[bb.start : bb.stop] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if spec.activation == "tanh":
                delta = delta * (1.0 - post[i] ** 2)
            else:
                delta = delta * (pre[i - 1] > 0)
    return ParameterVector(grad, layout)


def supervised_loss_grad(
    params: ParameterVector, spec: ModelSpec, X: np.ndarray, y: np.ndarray
) -> tuple[float, ParameterVector]:
    """Mean cross-entropy against integer labels, with its gradient."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("supervised batch must be non-empty")
    probs, pre, post = _forward_cached(params, spec, X)
    n = probs.shape[0]
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], LOG_FLOOR))))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, _backprop(params, spec, dlogits, pre, post)


def unsupervised_loss_grad(
    params: ParameterVector, spec: ModelSpec, X: np.ndarray, targets: np.ndarray
) -> tuple[float, ParameterVector]:
    """Mean cross-entropy against soft target distributions.

    Each target row must be a distribution (entries in [0,1] summing to 1
    within 1e-6); rejects anything else so upstream label bugs surface here.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise ValueError("unsupervised batch must be non-empty")
    if targets.ndim != 2 or targets.shape[1] != spec.num_classes:
        raise ValueError(f"targets must have {spec.num_classes} columns, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("each soft target must be a distribution summing to 1 within 1e-6")
    probs, pre, post = _forward_cached(params, spec, X)
    n = probs.shape[0]
    loss = float(-np.mean(np.sum(targets * np.log(np.maximum(probs, LOG_FLOOR)), axis=1)))
    dlogits = (probs - targets) / n
    return loss, _backprop(params, spec, dlogits, pre, post)


def sgd_step(params: ParameterVector, grad: ParameterVector, learning_rate: float) -> ParameterVector:
    """One gradient-descent update: params - learning_rate * grad."""
    if not params.same_layout(grad):
        raise ValueError("gradient layout does not match parameter layout")
    return ParameterVector(params.values - learning_rate * grad.values, params.layout)
