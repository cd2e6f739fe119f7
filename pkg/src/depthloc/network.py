"""Finite-width fully connected ReLU networks trained by minibatch SGD.

The network is f(x) = w^(L+1) z^(L), z^(l) = relu(w^(l) z^(l-1) + b^(l)),
z^(0) = x, with one scalar output and no output bias.  Two initialization
schemes are supported: Glorot uniform with zero biases (the SGD experiments)
and the NTK parameterization w = sqrt(2/fan_in) * wt, b = beta * bt with
standard-normal wt, bt.  For NTK-parameterized models the SGD step is taken
in the scaled variables (wt, bt), i.e. the learning rate is the scaled one.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import RngStream
from .targets import Dataset

INIT_KINDS = ("glorot", "ntk_param")

STOP_LOSS = "loss_threshold"
STOP_ACC = "accuracy_threshold"
STOP_CAP = "epoch_cap"
STOP_DIVERGED = "diverged"


class NonFinite(FloatingPointError):
    """An activation or loss overflowed; signals divergence to the trainer."""


@dataclass(frozen=True)
class Architecture:
    d: int
    L: int
    h: int
    init: str = "glorot"
    beta: float = 0.0

    def __post_init__(self):
        if self.L < 1 or self.h < 1 or self.d < 1:
            raise ValueError("d, L, h must all be >= 1")
        if self.init not in INIT_KINDS:
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.d] + [self.h] * self.L + [1]

    @property
    def param_count(self) -> int:
        # weights + hidden biases + output weights, no output bias
        return self.d * self.h + self.h + (self.L - 1) * (self.h ** 2 + self.h) + self.h


def width_for_depth(P: int, d: int, L: int) -> int:
    """Integer width h minimizing |d*h + (L-1)*h^2 - P|, ties toward smaller h."""
    if P <= d:
        raise ValueError("parameter budget must exceed the input dimension")
    if L < 1:
        raise ValueError("L must be >= 1")
    if L == 1:
        root = P / d
    else:
        a = L - 1
        root = (-d + np.sqrt(d * d + 4.0 * a * P)) / (2.0 * a)
    lo = max(1, int(np.floor(root)) - 3)
    candidates = range(lo, int(np.ceil(root)) + 4)
    budget = lambda h: d * h + (L - 1) * h * h
    return min(candidates, key=lambda h: (abs(budget(h) - P), h))


@dataclass
class MlpModel:
    arch: Architecture
    weights: list  # weights[l] has shape (n_{l+1}, n_l), l = 0..L
    biases: list   # biases[l] has shape (h,), l = 0..L-1 (hidden layers only)

    def copy(self) -> "MlpModel":
        return MlpModel(self.arch,
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def params_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and \
            all(np.isfinite(b).all() for b in self.biases)


@dataclass
class TrainReport:
    epochs_run: int
    final_train_loss: float
    loss_history: list  # (epoch, loss-or-accuracy) pairs at every check
    stop_reason: str


def _ntk_weight_gain(layer: int, fan_in: int) -> float:
    """Squared weight scale of 1-based ``layer`` in the NTK parameterization.

    The input layer carries 1/d (so the infinite-width covariance recursion
    starts at x.x'/d + beta^2); every deeper layer carries the
    ReLU-compensating 2/fan_in.
    """
    return (1.0 if layer == 1 else 2.0) / fan_in


def init_model(arch: Architecture, rng: RngStream) -> MlpModel:
    sizes = arch.layer_sizes
    weights, biases = [], []
    for l in range(arch.L + 1):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        if arch.init == "glorot":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        else:
            gain = np.sqrt(_ntk_weight_gain(l + 1, fan_in))
            weights.append(gain * rng.normal(fan_out, fan_in))
    for l in range(arch.L):
        if arch.init == "glorot":
            biases.append(np.zeros(arch.h))
        else:
            biases.append(arch.beta * rng.normal(arch.h))
    return MlpModel(arch, weights, biases)


def forward_batch(model: MlpModel, X: np.ndarray):
    """Outputs plus retained activations for a batch.

    Returns (out (n,), zs, masks) where zs[l] is z^(l) for l = 0..L and
    masks[l] is the ReLU gate of hidden layer l+1.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.arch.d:
        raise ValueError(f"input dim {X.shape[1]} != {model.arch.d}")
    z = X
    zs = [z]
    masks = []
    for l in range(model.arch.L):
        a = z @ model.weights[l].T + model.biases[l]
        mask = a > 0
        z = np.where(mask, a, 0.0)
        zs.append(z)
        masks.append(mask)
    out = z @ model.weights[-1].ravel()
    return out, zs, masks


def forward(model: MlpModel, x: np.ndarray):
    """Single-input forward pass: (output, per-layer activations)."""
    out, zs, _ = forward_batch(model, np.asarray(x)[None, :])
    if not np.isfinite(out[0]):
        raise NonFinite("network output is not finite")
    return float(out[0]), [z[0] for z in zs]


def loss(model: MlpModel, X: np.ndarray, y: np.ndarray, kind: str = "mse") -> float:
    out, _, _ = forward_batch(model, X)
    return _loss_from_outputs(out, np.asarray(y, dtype=np.float64), kind)


def _loss_from_outputs(out: np.ndarray, y: np.ndarray, kind: str) -> float:
    if kind == "mse":
        return float(np.mean((out - y) ** 2))
    if kind == "cross_entropy":
        # log(1 + exp(-y f)), stabilized
        return float(np.mean(np.logaddexp(0.0, -y * out)))
    raise ValueError(f"unknown loss kind {kind!r}")


def backward(model: MlpModel, X: np.ndarray, y: np.ndarray, kind: str = "mse"):
    """Analytic gradient of the batch loss; ReLU subgradient at 0 is 0."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    out, zs, masks = forward_batch(model, X)
    n = X.shape[0]
    if kind == "mse":
        dout = 2.0 * (out - y) / n
    elif kind == "cross_entropy":
        dout = -y / (1.0 + np.exp(y * out)) / n
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    grads_w = [None] * (model.arch.L + 1)
    grads_b = [None] * model.arch.L
    grads_w[-1] = (dout @ zs[-1])[None, :]
    delta = dout[:, None] * model.weights[-1]  # (n, h)
    for l in range(model.arch.L - 1, -1, -1):
        delta = delta * masks[l]
        grads_w[l] = delta.T @ zs[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ model.weights[l]
    return grads_w, grads_b


@dataclass(frozen=True)
class TrainCaps:
    epoch_cap: int = 2500
    loss_threshold: Optional[float] = 1e-4
    accuracy_threshold: Optional[float] = None  # e.g. 1.0 to stop at 100%
    check_every: int = 50


def _step_scales(model: MlpModel):
    """Per-layer learning-rate multipliers.

    Glorot models train the raw parameters (scale 1).  NTK-parameterized
    models take the gradient step in the scaled variables, which in raw
    coordinates multiplies the weight step by 2/fan_in and the bias step by
    beta^2.
    """
    arch = model.arch
    if arch.init == "glorot":
        return [1.0] * (arch.L + 1), [1.0] * arch.L
    sizes = arch.layer_sizes
    w_scale = [_ntk_weight_gain(l + 1, sizes[l]) for l in range(arch.L + 1)]
    b_scale = [arch.beta ** 2] * arch.L
    return w_scale, b_scale


def sgd_train(model: MlpModel, dataset: Dataset, eta: float, batch_size: int,
              caps: TrainCaps, rng: RngStream):
    """Minibatch SGD with the periodic stopping check.

    Each epoch shuffles the sample indices (dedicated stream), partitions
    them into batches of exactly ``batch_size`` dropping the remainder, and
    applies plain SGD steps.  Every ``check_every`` epochs the full training
    loss (regression) or accuracy (classification) is measured; training
    stops when the configured threshold is met, on divergence, or at the
    epoch cap.  Returns a trained copy and a TrainReport.
    """
    if batch_size > dataset.n:
        raise ValueError("batch size exceeds dataset size")
    if eta < 0:
        raise ValueError("learning rate must be >= 0")
    kind = "cross_entropy" if dataset.spec.task == "classification" else "mse"
    model = model.copy()
    w_scale, b_scale = _step_scales(model)
    X, y = dataset.inputs, dataset.labels
    n_batches = dataset.n // batch_size
    history = []
    stop_reason = STOP_CAP
    epochs_run = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, caps.epoch_cap + 1):
            perm = rng.permutation(dataset.n)
            for b in range(n_batches):
                idx = perm[b * batch_size:(b + 1) * batch_size]
                gw, gb = backward(model, X[idx], y[idx], kind)
                for l in range(model.arch.L + 1):
                    model.weights[l] -= eta * w_scale[l] * gw[l]
                for l in range(model.arch.L):
                    model.biases[l] -= eta * b_scale[l] * gb[l]
            epochs_run = epoch
            if not model.params_finite():
                stop_reason = STOP_DIVERGED
                break
            if epoch % caps.check_every == 0:
                out, _, _ = forward_batch(model, X)
                if not np.all(np.isfinite(out)):
                    stop_reason = STOP_DIVERGED
                    break
                if kind == "cross_entropy":
                    acc = float(np.mean(np.where(out >= 0, 1.0, -1.0) == y))
                    history.append((epoch, acc))
                    if caps.accuracy_threshold is not None and \
                            acc >= caps.accuracy_threshold:
                        stop_reason = STOP_ACC
                        break
                else:
                    lv = _loss_from_outputs(out, y, kind)
                    history.append((epoch, lv))
                    if caps.loss_threshold is not None and lv < caps.loss_threshold:
                        stop_reason = STOP_LOSS
                        break
        if stop_reason == STOP_DIVERGED:
            final = float("inf")
        else:
            final = loss(model, X, y, kind)
            if not np.isfinite(final):
                stop_reason = STOP_DIVERGED
        if not history:
            history.append((epochs_run, final))
    return model, TrainReport(epochs_run, final, history, stop_reason)


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    out, _, _ = forward_batch(model, X)
    return out


def predict_sign(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Sign of the network output; an exact 0 maps to +1."""
    return np.where(predict(model, X) >= 0, 1.0, -1.0)
