"""Dense network primitives: a small MLP with exact manual gradients,
the three training losses (softmax-CE, per-class sigmoid-BCE, softmax-MSE),
momentum SGD, and the temperature sharpening function.

Everything works on plain float64 numpy arrays; no autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ShapeError(ValueError):
    """Input/target dimensions do not match the model or loss contract."""


class DivergedError(FloatingPointError):
    """A loss evaluated to NaN/Inf."""


class LossKind(Enum):
    CE = "ce"    # softmax cross-entropy, one-hot target
    BCE = "bce"  # per-class sigmoid BCE, binary target, mean over classes
    MSE = "mse"  # mean squared error between softmax output and a probability target


def one_hot(labels, num_classes):
    """Integer class indices (B,) -> one-hot matrix (B, num_classes)."""
    labels = np.asarray(labels)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def softmax(logits):
    """Stable softmax along the last axis (max-subtraction)."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(logits):
    """Numerically stable elementwise sigmoid."""
    z = np.asarray(logits, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sharpen(probs, temperature):
    """Raise a distribution to the power 1/T and renormalise.

    T=1 is the identity; T<1 concentrates mass on high-probability classes.
    Works row-wise on 2-D input. Rejects all-zero rows.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0):
        raise ValueError("sharpen expects non-negative probabilities")
    q = p ** (1.0 / temperature)
    denom = q.sum(axis=-1, keepdims=True)
    if np.any(denom == 0):
        raise ValueError("sharpen: all-zero distribution")
    return q / denom


@dataclass
class MlpModel:
    """Fully connected net with ReLU hidden layers and a linear output head.

    weights[i] has shape (layer_dims[i], layer_dims[i+1]); biases[i] has
    shape (layer_dims[i+1],).
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_dims, seed=0):
        """Glorot-uniform weights, zero biases, deterministic per seed."""
        dims = list(layer_dims)
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"bad layer dims: {dims}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(dims, weights, biases)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def copy(self):
        return MlpModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def params_equal(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and all(
            np.array_equal(a, b) for a, b in zip(self.biases, other.biases)
        )

    def _check_batch(self, batch):
        x = np.asarray(batch, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(
                f"batch shape {x.shape} incompatible with input dim {self.input_dim}"
            )
        return x

    def forward(self, batch):
        """Batch (B, d) -> logits (B, |Y|)."""
        logits, _ = self._forward_cached(batch)
        return logits

    def _forward_cached(self, batch):
        """Forward pass keeping post-activation values for backprop."""
        x = self._check_batch(batch)
        activations = [x]
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.maximum(z, 0.0)
            activations.append(a)
        return a, activations


def _loss_and_dlogits(logits, targets, kind):
    """Per-sample losses (B,) and d(per-sample loss)/d(logits) (B, C)."""
    t = np.asarray(targets, dtype=float)
    if t.shape != logits.shape:
        raise ShapeError(f"target shape {t.shape} != logits shape {logits.shape}")
    c = logits.shape[1]
    if kind is LossKind.CE:
        # log-softmax computed from logits directly
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        losses = -(t * logp).sum(axis=1)
        dlogits = softmax(logits) - t
    elif kind is LossKind.BCE:
        z = logits
        # softplus form: max(z,0) - z*t + log1p(exp(-|z|)), mean over classes
        per_class = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
        losses = per_class.mean(axis=1)
        dlogits = (sigmoid(z) - t) / c
    elif kind is LossKind.MSE:
        p = softmax(logits)
        diff = p - t
        losses = (diff ** 2).mean(axis=1)
        g = 2.0 * diff / c
        # softmax Jacobian-vector product
        dlogits = p * (g - (g * p).sum(axis=1, keepdims=True))
    else:
        raise ValueError(f"unknown loss kind: {kind}")
    return losses, dlogits


def per_sample_losses(model, batch, targets, kind):
    """Per-sample losses without gradients (used for selection/histograms)."""
    logits, _ = model._forward_cached(batch)
    losses, _ = _loss_and_dlogits(logits, targets, kind)
    return losses


def loss_and_grad(model, batch, targets, kind, sample_weights=None):
    """Weighted-mean loss over the batch and gradients w.r.t. all parameters.

    sample_weights, when given, must be non-negative with length B; the loss
    is sum(w_i * l_i) / sum(w_i). Raises DivergedError if the loss is not
    finite.
    """
    logits, acts = model._forward_cached(batch)
    losses, dlogits = _loss_and_dlogits(logits, targets, kind)
    b = logits.shape[0]
    if sample_weights is None:
        coeff = np.full(b, 1.0 / b)
        loss = losses.mean()
    else:
        u = np.asarray(sample_weights, dtype=float)
        if u.shape != (b,):
            raise ShapeError(f"sample_weights shape {u.shape}, expected ({b},)")
        if np.any(u < 0):
            raise ValueError("sample_weights must be non-negative")
        total = u.sum()
        if total == 0:
            zeros = ([np.zeros_like(w) for w in model.weights],
                     [np.zeros_like(c) for c in model.biases])
            return 0.0, zeros
        coeff = u / total
        loss = float((u * losses).sum() / total)
    if not np.isfinite(loss):
        raise DivergedError(f"non-finite {kind.value} loss: {loss}")

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    dz = dlogits * coeff[:, None]
    for i in range(len(model.weights) - 1, -1, -1):
        a_prev = acts[i]
        grad_w[i] = a_prev.T @ dz
        grad_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.weights[i].T
            dz = da * (acts[i] > 0)  # ReLU mask (post-activation > 0)
    return float(loss), (grad_w, grad_b)


@dataclass
class SgdMomentum:
    """Classic momentum SGD with coupled weight decay.

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v
    """

    lr: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    _vel_w: list = field(default_factory=list)
    _vel_b: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    def _ensure_state(self, model):
        if not self._vel_w:
            self._vel_w = [np.zeros_like(w) for w in model.weights]
            self._vel_b = [np.zeros_like(b) for b in model.biases]

    def step(self, model, grads):
        """Update model parameters in place."""
        grad_w, grad_b = grads
        self._ensure_state(model)
        for i in range(len(model.weights)):
            if grad_w[i].shape != model.weights[i].shape:
                raise ShapeError("gradient/parameter shape mismatch")
            self._vel_w[i] = (
                self.momentum * self._vel_w[i]
                + grad_w[i]
                + self.weight_decay * model.weights[i]
            )
            model.weights[i] -= self.lr * self._vel_w[i]
            self._vel_b[i] = (
                self.momentum * self._vel_b[i]
                + grad_b[i]
                + self.weight_decay * model.biases[i]
            )
            model.biases[i] -= self.lr * self._vel_b[i]
