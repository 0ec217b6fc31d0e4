"""Small fully-connected binary classifiers trained with full-batch Adam.

Layer ``i`` computes ``f_i(x) = act(W_i x + b_i)``. Hidden layers use the
model's activation tag; the single output unit is always a sigmoid so the
training loss is binary cross-entropy on a probability.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import LabeledPointCloud

ACTIVATIONS = ("sigmoid", "relu", "tanh")


class ModelError(ValueError):
    pass


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(tag: str, z):
    if tag == "sigmoid":
        return _sigmoid(z)
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    raise ModelError(f"unknown activation {tag!r}")


def _activation_grad(tag: str, z, a):
    """Derivative of the activation given pre-activation ``z`` and output ``a``."""
    if tag == "sigmoid":
        return a * (1.0 - a)
    if tag == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


@dataclass(eq=False)
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"

    def __post_init__(self) -> None:
        self.layer_dims = [int(n) for n in self.layer_dims]
        _check_dims(self.layer_dims)
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ModelError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise ModelError(f"layer {i + 1}: expected W {shape}, got {w.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelError(f"layer {i + 1}: non-finite parameters")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def layer_activation(self, i: int) -> str:
        """Activation of layer ``i`` (1-based); the last layer is a sigmoid."""
        return "sigmoid" if i == self.n_layers else self.activation

    def get_params(self) -> np.ndarray:
        """Flat parameter vector, layer by layer: W_i row-major then b_i."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend([w.ravel(), b])
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ModelError(f"expected {self.n_params} parameters, got {flat.size}")
        k = 0
        for i, w in enumerate(self.weights):
            self.weights[i] = flat[k:k + w.size].reshape(w.shape).copy()
            k += w.size
            nb = self.biases[i].size
            self.biases[i] = flat[k:k + nb].copy()
            k += nb

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.activation)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.activation == other.activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def to_json(self) -> str:
        # repr() of a Python float is the shortest string that round-trips
        doc = {
            "layer_dims": self.layer_dims,
            "activation": self.activation,
            "weights": [[float(x) for x in w.ravel()] for w in self.weights],
            "biases": [[float(x) for x in b] for b in self.biases],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        dims = [int(n) for n in doc["layer_dims"]]
        weights = [np.asarray(w, dtype=np.float64).reshape(dims[i + 1], dims[i])
                   for i, w in enumerate(doc["weights"])]
        return cls(dims, weights, doc["biases"], doc["activation"])


def _check_dims(layer_dims) -> None:
    if len(layer_dims) < 2:
        raise ModelError("needs >= 2 layers (input and output)")
    if any(n <= 0 for n in layer_dims):
        raise ModelError("layer widths must be positive")
    if layer_dims[-1] != 1:
        raise ModelError("output layer must have width 1")


def init_model(layer_dims, activation: str = "sigmoid", seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    layer_dims = [int(n) for n in layer_dims]
    _check_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims, weights, biases, activation)


@dataclass
class LayerImages:
    """Images X_0..X_{m+1} of a point set, rows aligned with ``ids``."""

    images: list[np.ndarray]
    ids: np.ndarray

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if any(x.shape[0] != self.ids.shape[0] for x in self.images):
            raise ModelError("every layer image must have one row per id")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.images[i]

    @property
    def dims(self) -> list[int]:
        return [int(x.shape[1]) for x in self.images]

    def subset(self, ids) -> "LayerImages":
        pos = {int(i): k for k, i in enumerate(self.ids)}
        idx = np.array([pos[int(i)] for i in ids], dtype=np.int64)
        return LayerImages([x[idx] for x in self.images], self.ids[idx])

    def to_json(self) -> str:
        return json.dumps({"ids": self.ids.tolist(),
                           "images": [x.tolist() for x in self.images]})

    @classmethod
    def from_json(cls, text: str) -> "LayerImages":
        doc = json.loads(text)
        n = len(doc["ids"])
        images = [np.asarray(x, dtype=np.float64).reshape(n, -1) for x in doc["images"]]
        return cls(images, doc["ids"])


def _forward(model: MlpModel, x: np.ndarray):
    pre, post = [], [x]
    a = x
    for i, (w, b) in enumerate(zip(model.weights, model.biases), start=1):
        z = a @ w.T + b
        a = _activate(model.layer_activation(i), z)
        pre.append(z)
        post.append(a)
    return pre, post


def _check_input(model: MlpModel, cloud: LabeledPointCloud) -> None:
    if cloud.dim != model.layer_dims[0]:
        raise ModelError(f"cloud has dim {cloud.dim}, model expects {model.layer_dims[0]}")


def forward_all(model: MlpModel, cloud: LabeledPointCloud) -> LayerImages:
    _check_input(model, cloud)
    _, post = _forward(model, cloud.points)
    return LayerImages([p.copy() for p in post], cloud.ids.copy())


def predict_proba(model: MlpModel, points: np.ndarray) -> np.ndarray:
    return _forward(model, np.atleast_2d(points))[1][-1][:, 0]


def accuracy(model: MlpModel, cloud: LabeledPointCloud, threshold: float = 0.5) -> float:
    """Fraction of points where ``output > threshold`` agrees with the label."""
    _check_input(model, cloud)
    if len(cloud) == 0:
        return 0.0
    pred = (predict_proba(model, cloud.points) > threshold).astype(np.int64)
    return float(np.mean(pred == cloud.labels))


def _loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    pre, post = _forward(model, x)
    n = x.shape[0]
    z_out = pre[-1][:, 0]
    # mean BCE written on the logit: softplus(z) - y z
    loss = float(np.mean(np.logaddexp(0.0, z_out) - y * z_out))
    delta = (post[-1] - y[:, None]) / n
    grads_w, grads_b = [], []
    for i in range(model.n_layers, 0, -1):
        grads_w.append(delta.T @ post[i - 1])
        grads_b.append(delta.sum(axis=0))
        if i > 1:
            back = delta @ model.weights[i - 1]
            tag = model.layer_activation(i - 1)
            delta = back * _activation_grad(tag, pre[i - 2], post[i - 1])
    grads_w.reverse()
    grads_b.reverse()
    return loss, grads_w, grads_b


def loss(model: MlpModel, cloud: LabeledPointCloud) -> float:
    _check_input(model, cloud)
    z = _forward(model, cloud.points)[0][-1][:, 0]
    return float(np.mean(np.logaddexp(0.0, z) - cloud.labels * z))


def loss_gradient(model: MlpModel, cloud: LabeledPointCloud) -> np.ndarray:
    """Backprop gradient of mean BCE, flattened like ``MlpModel.get_params``."""
    _check_input(model, cloud)
    _, gw, gb = _loss_and_grads(model, cloud.points, cloud.labels.astype(np.float64))
    parts = []
    for w, b in zip(gw, gb):
        parts.extend([w.ravel(), b])
    return np.concatenate(parts)


@dataclass
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ModelError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ModelError("Adam betas must lie in (0, 1)")


@dataclass
class TrainReport:
    final_loss: float
    accuracy: float
    epochs: int
    loss_trace: list[float] = field(default_factory=list)


def train(model: MlpModel, cloud: LabeledPointCloud, config: TrainConfig) -> TrainReport:
    """Full-batch Adam on mean BCE; updates ``model`` in place.

    ``loss_trace[k]`` is the loss before update ``k``; the last entry is the
    loss after the final update. Raises TrainingDiverged on a non-finite loss.
    """
    _check_input(model, cloud)
    x = cloud.points
    y = cloud.labels.astype(np.float64)
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    params = [p for pair in zip(model.weights, model.biases) for p in pair]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    trace: list[float] = []
    # overflow surfaces as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, config.epochs + 1):
            value, gw, gb = _loss_and_grads(model, x, y)
            if not np.isfinite(value):
                raise TrainingDiverged(t - 1, value)
            trace.append(value)
            grads = [g for pair in zip(gw, gb) for g in pair]
            for k, (p, g) in enumerate(zip(params, grads)):
                m[k] = b1 * m[k] + (1 - b1) * g
                v[k] = b2 * v[k] + (1 - b2) * g * g
                m_hat = m[k] / (1 - b1 ** t)
                v_hat = v[k] / (1 - b2 ** t)
                p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        final = loss(model, cloud)
        if not np.isfinite(final):
            raise TrainingDiverged(config.epochs, final)
        trace.append(final)
    return TrainReport(final, accuracy(model, cloud), config.epochs, trace)
