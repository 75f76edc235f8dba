"""Dense ReLU regression network with dropout and L2 penalty, in plain numpy.

Parameters are stored as ``weights[k]`` of shape ``(fan_in, fan_out)`` and
``biases[k]`` of shape ``(fan_out,)``; the last layer is a single linear
unit. Batches are row-major ``(batch, features)`` arrays.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, TrainingDiverged

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class NetworkConfig:
    input_dim: Optional[int] = None
    hidden_layers: list = field(default_factory=lambda: [64, 64, 64])
    dropout_rate: float = 0.2
    l2_lambda: float = 1e-4
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    optimizer: str = "adam"

    def __post_init__(self):
        self.hidden_layers = [int(w) for w in self.hidden_layers]
        if any(w < 1 for w in self.hidden_layers):
            raise ConfigError(f"hidden layer widths must be >= 1: {self.hidden_layers}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainedNetwork:
    weights: list
    biases: list
    config: NetworkConfig
    columns: list = field(default_factory=list)
    scaler_mean: Optional[np.ndarray] = None
    scaler_sd: Optional[np.ndarray] = None
    loss_history: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.loss_history[-1] if self.loss_history else None

    @property
    def shapes(self):
        return [w.shape for w in self.weights]

    def copy(self):
        return dataclasses.replace(
            self,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            loss_history=list(self.loss_history),
        )


def init_network(config: NetworkConfig) -> TrainedNetwork:
    """He-normal weights (sd = sqrt(2 / fan_in)), zero biases."""
    if not config.input_dim or config.input_dim < 1:
        raise ConfigError(f"input_dim must be a positive integer, got {config.input_dim}")
    rng = np.random.default_rng(config.seed)
    dims = [config.input_dim] + list(config.hidden_layers) + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return TrainedNetwork(weights, biases, config)


def draw_masks(net, n_rows, rng):
    """Inverted-dropout masks, one ``(n_rows, width)`` array per hidden layer."""
    p = net.config.dropout_rate
    if p == 0:
        return None
    keep = 1.0 - p
    return [(rng.random((n_rows, w.shape[1])) >= p) / keep for w in net.weights[:-1]]


def _forward(weights, biases, X, masks=None):
    """Return the output column and the per-layer cache used by backprop."""
    a = X
    cache = []
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        if k == last:
            cache.append((a, z, None))
            return z[:, 0], cache
        h = np.maximum(z, 0.0)
        m = None if masks is None else masks[k]
        if m is not None:
            h = h * m
        cache.append((a, z, m))
        a = h


def _check_batch(net, X, y=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.weights[0].shape[0]:
        raise DataError(f"input has {X.shape[1]} features, network expects {net.weights[0].shape[0]}")
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise DataError("rows and targets differ in length")
        if X.shape[0] == 0:
            raise DataError("empty batch")
    return X, y


def forward(net, x, mode="infer", rng=None):
    """Prediction for a single feature vector.

    ``mode="train"`` applies fresh inverted-dropout masks drawn from ``rng``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.weights[0].shape[0]:
        raise DataError(f"expected a vector of length {net.weights[0].shape[0]}, got shape {x.shape}")
    masks = None
    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs a random stream")
        masks = draw_masks(net, 1, rng)
    elif mode != "infer":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    out, _ = _forward(net.weights, net.biases, x[None, :], masks)
    return float(out[0])


def forward_batch(net, X, masks=None):
    X, _ = _check_batch(net, X)
    out, _ = _forward(net.weights, net.biases, X, masks)
    return out


def l2_penalty(net):
    return net.config.l2_lambda * sum(float(np.sum(W * W)) for W in net.weights)


def loss(net, X, y, masks=None):
    """Batch MSE plus ``l2_lambda * sum(W**2)``; biases are not penalised."""
    X, y = _check_batch(net, X, y)
    out, _ = _forward(net.weights, net.biases, X, masks)
    r = out - y
    return float(np.mean(r * r)) + l2_penalty(net)


def backward_gradients(net, X, y, masks=None):
    """Exact gradients of :func:`loss`; returns ``(weight_grads, bias_grads)``."""
    X, y = _check_batch(net, X, y)
    if masks is not None and len(masks) != len(net.weights) - 1:
        raise DataError("one dropout mask per hidden layer is required")
    _, gW, gb = _loss_and_grads(net, X, y, masks)
    return gW, gb


def _loss_and_grads(net, X, y, masks):
    out, cache = _forward(net.weights, net.biases, X, masks)
    lam = net.config.l2_lambda
    r = out - y
    value = float(np.mean(r * r)) + l2_penalty(net)
    grad = (2.0 / X.shape[0]) * r[:, None]
    last = len(net.weights) - 1
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for k in range(last, -1, -1):
        a_in, z, m = cache[k]
        if k < last:
            # grad arrives as dL/dh for this layer's masked activation
            if m is not None:
                grad = grad * m
            grad = grad * (z > 0)
        gW[k] = a_in.T @ grad + 2.0 * lam * net.weights[k]
        gb[k] = grad.sum(axis=0)
        if k > 0:
            grad = grad @ net.weights[k].T
    return value, gW, gb


def train(frame, config: NetworkConfig) -> TrainedNetwork:
    """Mini-batch training; returns final-epoch parameters and per-epoch loss history.

    Each epoch reshuffles the training rows and draws fresh dropout masks
    per batch; a short trailing batch is merged into the one before it. The recorded loss is the mean mini-batch loss of the epoch.
    """
    X = frame.design()
    y = np.asarray(frame.target, dtype=float)
    if config.input_dim is None:
        config = dataclasses.replace(config, input_dim=X.shape[1])
    elif config.input_dim != X.shape[1]:
        raise ConfigError(f"config.input_dim={config.input_dim} but frame has {X.shape[1]} columns")
    if X.shape[0] < config.batch_size:
        raise DataError(f"{X.shape[0]} rows is fewer than batch_size={config.batch_size}")
    if not np.all(np.isfinite(y)):
        raise DataError("training targets contain non-finite values")

    net = init_network(config)
    net.columns = list(frame.columns)
    net.scaler_mean = np.array(frame.scaler_mean, dtype=float)
    net.scaler_sd = np.array(frame.scaler_sd, dtype=float)

    rng = np.random.default_rng([config.seed, 1])
    params = net.weights + net.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    lr = config.learning_rate
    step = 0
    n = X.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for idx in _batches(order, config.batch_size):
            xb, yb = X[idx], y[idx]
            masks = draw_masks(net, len(idx), rng)
            value, gW, gb = _loss_and_grads(net, xb, yb, masks)
            total += value
            batches += 1
            grads = gW + gb
            step += 1
            if config.optimizer == "adam":
                c1 = 1.0 - ADAM_BETA1 ** step
                c2 = 1.0 - ADAM_BETA2 ** step
                for p, g, a, v in zip(params, grads, m1, m2):
                    a *= ADAM_BETA1
                    a += (1.0 - ADAM_BETA1) * g
                    v *= ADAM_BETA2
                    v += (1.0 - ADAM_BETA2) * g * g
                    p -= lr * (a / c1) / (np.sqrt(v / c2) + ADAM_EPS)
            else:
                for p, g in zip(params, grads):
                    p -= lr * g
        epoch_loss = total / batches
        if not math.isfinite(epoch_loss):
            raise TrainingDiverged(epoch, epoch_loss)
        net.loss_history.append(epoch_loss)
    return net


def _batches(order, size):
    # a short trailing batch is folded into the previous one; tiny batches
    # make late-training updates needlessly noisy
    n = len(order)
    stops = list(range(size, n + 1, size)) or [n]
    stops[-1] = n
    start = 0
    for stop in stops:
        yield order[start:stop]
        start = stop


def predict(net, frame, clamp=True):
    """Inference-mode predictions for every row, clamped below at zero."""
    if list(frame.columns) != list(net.columns):
        raise DataError(f"frame columns {frame.columns} do not match network columns {net.columns}")
    if len(frame) == 0:
        return np.zeros(0)
    X = (frame.rows - net.scaler_mean) / net.scaler_sd
    out = forward_batch(net, X)
    return np.maximum(out, 0.0) if clamp else out


def rmse(pred, actual):
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise DataError(f"length mismatch: {pred.shape[0]} vs {actual.shape[0]}")
    if pred.shape[0] == 0:
        raise DataError("rmse of empty vectors")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def to_dict(net):
    return {
        "config": dataclasses.asdict(net.config),
        "columns": list(net.columns),
        "scaler": {
            "mean": None if net.scaler_mean is None else net.scaler_mean.tolist(),
            "sd": None if net.scaler_sd is None else net.scaler_sd.tolist(),
        },
        "layers": [
            {"shape": list(W.shape), "weights": W.ravel().tolist(), "bias": b.tolist()}
            for W, b in zip(net.weights, net.biases)
        ],
        "loss_history": list(net.loss_history),
    }


def from_dict(doc):
    config = NetworkConfig(**doc["config"])
    weights = [np.array(layer["weights"], dtype=float).reshape(layer["shape"]) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in doc["layers"]]
    for a, b in zip(weights, weights[1:]):
        if a.shape[1] != b.shape[0]:
            raise DataError("stored layer shapes do not chain")
    scaler = doc.get("scaler") or {}
    mean = scaler.get("mean")
    sd = scaler.get("sd")
    return TrainedNetwork(
        weights, biases, config, list(doc.get("columns", [])),
        None if mean is None else np.array(mean, dtype=float),
        None if sd is None else np.array(sd, dtype=float),
        list(doc.get("loss_history", [])),
    )


def save(net, path):
    Path(path).write_text(json.dumps(to_dict(net), indent=1) + "\n", encoding="utf-8")


def load(path):
    return from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
