"""Hybrid dense -> quantum -> dense classifier and the classical baseline.

Training uses mean absolute error on softmax probabilities and plain SGD.
Gradients through the quantum layer come from the parameter-shift
Jacobian of the ansatz expectations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ansatz
from .ansatz import AnsatzSpec
from .dataset import MoonsDataset
from .rng import stream

FORMAT_VERSION = 1
ACTIVATIONS = ("linear", "relu", "softmax")

# substream keys
_INIT = 3
_SHUFFLE = 4


class ModelFormatError(ValueError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64, ndmin=1)
        if self.activation not in ACTIVATIONS:
            raise ModelFormatError(f"unknown activation {self.activation!r}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ModelFormatError(
                f"bias length {self.bias.shape[0]} does not match out_dim {self.weights.shape[0]}"
            )

    @classmethod
    def init(cls, in_dim: int, out_dim: int, activation: str, rng: np.random.Generator):
        """Fan-based uniform init, biases zero."""
        s = math.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-s, s, size=(out_dim, in_dim)), np.zeros(out_dim), activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.out_dim * (self.in_dim + 1)

    def pre(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "softmax":
            return softmax(z)
        return z

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.act(self.pre(x))

    def to_dict(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseLayer":
        try:
            layer = cls(d["weights"], d["bias"], d["activation"])
            in_dim, out_dim = int(d["in_dim"]), int(d["out_dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"bad layer record: {exc}") from None
        if layer.weights.shape != (out_dim, in_dim):
            raise ModelFormatError(
                f"weights have shape {layer.weights.shape}, declared {out_dim}x{in_dim}"
            )
        return layer


@dataclass
class Gradients:
    """Per-layer ``(d_weights, d_bias)`` pairs, same order as ``model.layers``."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) for pair in self.layers for a in pair)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in self.layers for a in pair])


class _Model:
    layers: list[DenseLayer]
    n_classes: int

    def trainable_count(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite input features")
        return self._forward(np.atleast_2d(x))[-1].reshape(x.shape[:-1] + (self.n_classes,))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


class HybridModel(_Model):
    """Linear dense layer emitting ansatz angles, Z expectations, softmax readout."""

    def __init__(self, spec: AnsatzSpec, input_dense: DenseLayer, output_dense: DenseLayer):
        if input_dense.out_dim != spec.param_count:
            raise ModelFormatError(
                f"input layer emits {input_dense.out_dim} angles, ansatz needs {spec.param_count}"
            )
        if output_dense.in_dim != spec.n_qubits:
            raise ModelFormatError(
                f"output layer reads {output_dense.in_dim} values, ansatz has {spec.n_qubits} qubits"
            )
        if input_dense.activation != "linear" or output_dense.activation != "softmax":
            raise ModelFormatError("hybrid model needs a linear input and softmax output layer")
        self.spec = spec
        self.input_dense = input_dense
        self.output_dense = output_dense
        self.n_classes = output_dense.out_dim

    @classmethod
    def create(cls, n_qubits: int = 2, n_sublayers: int = 4, n_classes: int = 2,
               n_features: int = 2, seed: int = 0) -> "HybridModel":
        spec = AnsatzSpec(n_qubits, n_sublayers)
        rng = stream(seed, _INIT)
        return cls(
            spec,
            DenseLayer.init(n_features, spec.param_count, "linear", rng),
            DenseLayer.init(n_qubits, n_classes, "softmax", rng),
        )

    @property
    def layers(self) -> list[DenseLayer]:
        return [self.input_dense, self.output_dense]

    def _forward(self, x):
        theta = self.input_dense.pre(x)
        e = ansatz.expectations(self.spec, theta)
        return theta, e, self.output_dense(e)

    def _gradients(self, x, grad_p):
        theta, e, p = self._forward(x)
        dz = _softmax_backward(p, grad_p)
        d_w2, d_b2 = dz.T @ e, dz.sum(axis=0)
        de = dz @ self.output_dense.weights
        jac = ansatz.jacobian(self.spec, theta)  # (B, n, m)
        dtheta = np.einsum("bnm,bn->bm", jac, de)
        d_w1, d_b1 = dtheta.T @ x, dtheta.sum(axis=0)
        return p, [(d_w1, d_b1), (d_w2, d_b2)]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model": "hybrid",
            "n_qubits": self.spec.n_qubits,
            "n_sublayers": self.spec.n_sublayers,
            "n_classes": self.n_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    def copy(self) -> "HybridModel":
        return load_model_dict(self.to_dict())


class FFNNModel(_Model):
    """Fully connected baseline; every hidden layer uses a rectifier."""

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ModelFormatError(f"layer widths {a.out_dim} and {b.in_dim} do not chain")
        if layers[-1].activation != "softmax":
            raise ModelFormatError("last layer must use softmax")
        self.layers = layers
        self.n_classes = layers[-1].out_dim

    @classmethod
    def create(cls, widths: Sequence[int] = (2, 16, 16, 2), seed: int = 0) -> "FFNNModel":
        rng = stream(seed, _INIT)
        acts = ["relu"] * (len(widths) - 2) + ["softmax"]
        return cls(
            [DenseLayer.init(i, o, a, rng) for i, o, a in zip(widths, widths[1:], acts)]
        )

    def _forward(self, x):
        outs = [x]
        for layer in self.layers:
            outs.append(layer(outs[-1]))
        return outs

    def _gradients(self, x, grad_p):
        outs = self._forward(x)
        grads = []
        delta = _softmax_backward(outs[-1], grad_p)
        for i in reversed(range(len(self.layers))):
            layer, inp = self.layers[i], outs[i]
            grads.append((delta.T @ inp, delta.sum(axis=0)))
            if i:
                delta = (delta @ layer.weights) * (outs[i] > 0)
        return outs[-1], grads[::-1]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model": "ffnn",
            "n_classes": self.n_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    def copy(self) -> "FFNNModel":
        return load_model_dict(self.to_dict())


def ffnn_baseline(seed: int = 0) -> FFNNModel:
    """The 2-16-16-2 network with 354 trainable weights."""
    return FFNNModel.create((2, 16, 16, 2), seed)


def _softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    return p * (grad_p - np.sum(grad_p * p, axis=-1, keepdims=True))


def load_model_dict(d: dict):
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {d.get('format_version')!r}")
    layers = [DenseLayer.from_dict(rec) for rec in d.get("layers", [])]
    kind = d.get("model")
    if kind == "hybrid":
        if len(layers) != 2:
            raise ModelFormatError(f"hybrid model needs 2 layers, got {len(layers)}")
        model = HybridModel(AnsatzSpec(int(d["n_qubits"]), int(d["n_sublayers"])), *layers)
    elif kind == "ffnn":
        if not layers:
            raise ModelFormatError("ffnn model has no layers")
        model = FFNNModel(layers)
    else:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    if model.n_classes != d.get("n_classes"):
        raise ModelFormatError(
            f"declared n_classes {d.get('n_classes')} but output layer has {model.n_classes}"
        )
    return model


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from None
    return load_model_dict(d)


# losses and metrics


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return np.eye(n_classes)[labels]


def loss_mae(p, y) -> float:
    """Mean absolute error between probabilities and one-hot targets; batches are averaged."""
    p, y = np.asarray(p, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    return float(np.mean(np.abs(p - y)))


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty set")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    # argmax returns the first maximum, i.e. ties go to the lower index
    return float(np.mean(np.argmax(predictions, axis=-1) == labels))


def forward(model, x) -> np.ndarray:
    return model.predict(x)


def backward(model, x, y) -> Gradients:
    """Batch-mean gradient of the MAE loss w.r.t. every dense weight and bias.

    ``x`` is ``(B, features)``, ``y`` one-hot ``(B, classes)``.  The MAE
    subgradient is 0 where a probability equals its target.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("empty batch")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite input features")
    p = model._forward(x)[-1]
    grad_p = np.sign(p - y) / (y.shape[0] * y.shape[1])
    _, grads = model._gradients(x, grad_p)
    result = Gradients(grads)
    if not np.all(np.isfinite(result.flat())):
        raise FloatingPointError("non-finite gradient")
    return result


def sgd_step(model, grads: Gradients, learning_rate: float):
    if len(grads.layers) != len(model.layers):
        raise ValueError(f"{len(grads.layers)} gradient pairs for {len(model.layers)} layers")
    for layer, (gw, gb) in zip(model.layers, grads.layers):
        if gw.shape != layer.weights.shape or gb.shape != layer.bias.shape:
            raise ValueError(
                f"gradient shapes {gw.shape}/{gb.shape} do not match layer "
                f"{layer.weights.shape}/{layer.bias.shape}"
            )
    for layer, (gw, gb) in zip(model.layers, grads.layers):
        layer.weights -= learning_rate * gw
        layer.bias -= learning_rate * gb
    return model


def trainable_count(model) -> int:
    return model.trainable_count()


# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be a positive integer, got {self.batch_size}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float
    val_loss: float
    val_accuracy: float


METRICS_HEADER = "epoch,loss,accuracy,val_loss,val_accuracy"


@dataclass
class MetricsHistory:
    records: list[EpochMetrics] = field(default_factory=list)
    test_accuracy: Optional[float] = None

    def to_csv(self) -> str:
        lines = [METRICS_HEADER]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.loss!r},{r.accuracy!r},{r.val_loss!r},{r.val_accuracy!r}"
            )
        return "\n".join(lines) + "\n"


def evaluate(model, x, labels) -> tuple[float, float]:
    """(MAE loss, accuracy) over a whole split."""
    p = model.predict(x)
    return loss_mae(p, one_hot(labels, model.n_classes)), accuracy(p, labels)


def train(model, dataset: MoonsDataset, config: TrainConfig) -> MetricsHistory:
    if dataset.split is None:
        raise ValueError("dataset must be split before training")
    x_train, y_train = dataset.subset("train")
    x_val, y_val = dataset.subset("val")
    x_test, y_test = dataset.subset("test")
    if min(len(y_train), len(y_val), len(y_test)) == 0:
        raise ValueError("every split must be nonempty")
    if config.batch_size > len(y_train):
        raise ValueError(
            f"batch_size {config.batch_size} exceeds training set size {len(y_train)}"
        )
    targets = one_hot(y_train, model.n_classes)
    history = MetricsHistory()
    for epoch in range(1, config.epochs + 1):
        order = stream(config.seed, _SHUFFLE, epoch).permutation(len(y_train))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = backward(model, x_train[batch], targets[batch])
            sgd_step(model, grads, config.learning_rate)
        loss, acc = evaluate(model, x_train, y_train)
        val_loss, val_acc = evaluate(model, x_val, y_val)
        history.records.append(EpochMetrics(epoch, loss, acc, val_loss, val_acc))
    history.test_accuracy = evaluate(model, x_test, y_test)[1]
    return history
