"""Dense ReLU layers with hand-written backward passes, and the Adam update."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.errors import DimensionMismatch, NonFiniteGradient, ShapeMismatch

logger = logging.getLogger(__name__)

# Subgradient of ReLU at exactly zero.
RELU_GRAD_AT_ZERO = 0.0


class Activation(str, Enum):
    """Layer activations."""
    RELU = "relu"
    IDENTITY = "identity"


@dataclass
class DenseLayer:
    """Affine map ``x @ W.T + b`` with W of shape (out_dim, in_dim)."""
    weights: np.ndarray
    biases: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class LayerCache:
    layer: DenseLayer
    inputs: np.ndarray
    pre_activation: np.ndarray
    activation: Activation


@dataclass
class LayerGrads:
    weights: np.ndarray
    biases: np.ndarray


def relu_at_zero_convention() -> float:
    """ReLU'(0) as used by ``dense_backward``."""
    return RELU_GRAD_AT_ZERO


def relu_grad(pre: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(float)


def init_layer(in_dim: int, out_dim: int, rng: np.random.Generator) -> DenseLayer:
    """Glorot-uniform weights, zero biases."""
    bound = math.sqrt(6.0 / (in_dim + out_dim))
    return DenseLayer(
        weights=rng.uniform(-bound, bound, size=(out_dim, in_dim)),
        biases=np.zeros(out_dim),
    )


def dense_forward(layer: DenseLayer, inputs: np.ndarray,
                  activation: Activation = Activation.RELU) -> tuple[np.ndarray, LayerCache]:
    """Apply one layer to a vector or to a batch of row vectors."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[-1] != layer.in_dim:
        raise DimensionMismatch(f"Layer expects {layer.in_dim} inputs, got {inputs.shape[-1]}")
    pre = inputs @ layer.weights.T + layer.biases
    out = np.maximum(pre, 0.0) if activation == Activation.RELU else pre
    return out, LayerCache(layer, inputs, pre, Activation(activation))


def dense_backward(cache: LayerCache, upstream: np.ndarray) -> tuple[LayerGrads, np.ndarray]:
    """Gradients of a scalar loss w.r.t. W, b and the layer input.

    Batched inputs sum their parameter gradients over rows.
    """
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != cache.pre_activation.shape:
        raise ShapeMismatch(f"Upstream gradient {upstream.shape} vs output {cache.pre_activation.shape}")
    if cache.activation == Activation.RELU:
        upstream = upstream * relu_grad(cache.pre_activation)

    if upstream.ndim == 1:
        grad_w = np.outer(upstream, cache.inputs)
        grad_b = upstream.copy()
    else:
        grad_w = upstream.T @ cache.inputs
        grad_b = upstream.sum(axis=0)
    grad_in = upstream @ cache.layer.weights
    return LayerGrads(grad_w, grad_b), grad_in


def mlp_forward(layers: list[DenseLayer], inputs: np.ndarray,
                final: Activation = Activation.IDENTITY) -> tuple[np.ndarray, list[LayerCache]]:
    """ReLU on every layer but the last, which uses ``final``."""
    h = np.asarray(inputs, dtype=float)
    caches = []
    for i, layer in enumerate(layers):
        act = final if i == len(layers) - 1 else Activation.RELU
        h, cache = dense_forward(layer, h, act)
        caches.append(cache)
    return h, caches


def mlp_backward(caches: list[LayerCache], upstream: np.ndarray) -> tuple[list[LayerGrads], np.ndarray]:
    grads: list[LayerGrads] = []
    g = upstream
    for cache in reversed(caches):
        layer_grads, g = dense_backward(cache, g)
        grads.append(layer_grads)
    grads.reverse()
    return grads, g


@dataclass
class AdamState:
    """Adam moments per named parameter."""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam descent step, applied in place.

    Every gradient is checked before anything is modified, so a non-finite
    gradient leaves both parameters and state untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"Gradient for unknown parameter '{name}'")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeMismatch(f"Gradient for '{name}' has shape {np.shape(g)}, parameter {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(params[name], dtype=float)
            state.v[name] = np.zeros_like(params[name], dtype=float)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        m_hat = m / correction1
        v_hat = v / correction2
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
