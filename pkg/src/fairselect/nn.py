"""Minimal two-layer ReLU classifier with analytic gradients and plain SGD.

The network is `x -> relu(W1 x + b1) -> softmax(W2 h + b2)`. Everything is
plain numpy with float64 parameters; training steps are pure functions that
return fresh parameter values, so models are cheap to copy and safe to share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARAMS_FORMAT = "fairselect-params"
PARAMS_VERSION = 1


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of the two-layer network; arrays are treated as immutable."""

    layer1_weights: np.ndarray  # [hidden, d]
    layer1_bias: np.ndarray  # [hidden]
    layer2_weights: np.ndarray  # [k, hidden]
    layer2_bias: np.ndarray  # [k]

    def __post_init__(self):
        w1, b1, w2, b2 = (
            self.layer1_weights,
            self.layer1_bias,
            self.layer2_weights,
            self.layer2_bias,
        )
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise ValueError("parameter arrays have wrong rank")
        if b1.shape[0] != w1.shape[0]:
            raise ValueError("layer1 bias does not match layer1 weights")
        if w2.shape[1] != w1.shape[0]:
            raise ValueError("layer2 weights do not match hidden width")
        if b2.shape[0] != w2.shape[0]:
            raise ValueError("layer2 bias does not match layer2 weights")
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters contain non-finite entries")
            arr.setflags(write=False)

    @property
    def input_dim(self) -> int:
        return self.layer1_weights.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.layer1_weights.shape[0]

    @property
    def class_count(self) -> int:
        return self.layer2_weights.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for plain SGD training."""

    learning_rate: float = 0.01
    epochs: int = 10
    batch_size: int = 256
    hidden_width: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be at least 1")


def init_params(d: int, hidden: int, k: int, seed: int) -> ModelParams:
    """Seeded initial parameters.

    Weights are uniform on +-sqrt(1/fan_in) (zero-mean, fan-in scaled);
    biases start at exactly zero. The same seed always yields bit-identical
    parameters.
    """
    if d < 1 or hidden < 1 or k < 1:
        raise ValueError("d, hidden and k must all be at least 1")
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(1.0 / d)
    lim2 = np.sqrt(1.0 / hidden)
    return ModelParams(
        layer1_weights=rng.uniform(-lim1, lim1, size=(hidden, d)),
        layer1_bias=np.zeros(hidden),
        layer2_weights=rng.uniform(-lim2, lim2, size=(k, hidden)),
        layer2_bias=np.zeros(k),
    )


def _logits(params: ModelParams, features: np.ndarray) -> np.ndarray:
    hidden = np.maximum(features @ params.layer1_weights.T + params.layer1_bias, 0.0)
    return hidden @ params.layer2_weights.T + params.layer2_bias


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Predicted class probabilities for one feature vector or a batch.

    Accepts shape [d] or [N, d] and returns [k] or [N, k]; rows sum to 1.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != params.input_dim:
        raise ValueError(
            f"feature dimension {features.shape[-1]} does not match model "
            f"input dimension {params.input_dim}"
        )
    if features.ndim not in (1, 2):
        raise ValueError("features must be a vector or a matrix")
    probs = np.exp(_log_softmax(_logits(params, features)))
    # Keep entries strictly inside (0, 1); extreme logits would otherwise
    # underflow to exactly 0 or round to exactly 1.
    return np.clip(probs, 1e-300, 1.0 - 1e-16)


def predict_labels(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Argmax class per row."""
    return np.argmax(_logits(params, np.asarray(features, dtype=float)), axis=-1)


def _check_batch(params: ModelParams, features: np.ndarray, labels: np.ndarray):
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if features.ndim != 2:
        raise ValueError("batch features must be a matrix")
    if features.shape[0] == 0:
        raise ValueError("batch is empty")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree on batch size")
    if features.shape[1] != params.input_dim:
        raise ValueError("batch feature dimension does not match model")
    if labels.min() < 0 or labels.max() >= params.class_count:
        raise ValueError("label out of range for model class count")
    return features, labels


def loss(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy over the batch."""
    features, labels = _check_batch(params, features, labels)
    log_probs = _log_softmax(_logits(params, features))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def gradient(params: ModelParams, features: np.ndarray, labels: np.ndarray) -> ModelParams:
    """Analytic gradient of `loss` with respect to every parameter."""
    features, labels = _check_batch(params, features, labels)
    n = features.shape[0]

    pre_hidden = features @ params.layer1_weights.T + params.layer1_bias
    hidden = np.maximum(pre_hidden, 0.0)
    probs = np.exp(_log_softmax(hidden @ params.layer2_weights.T + params.layer2_bias))

    d_logits = probs
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n

    d_w2 = d_logits.T @ hidden
    d_b2 = d_logits.sum(axis=0)
    d_hidden = (d_logits @ params.layer2_weights) * (pre_hidden > 0.0)
    d_w1 = d_hidden.T @ features
    d_b1 = d_hidden.sum(axis=0)
    return ModelParams(d_w1, d_b1, d_w2, d_b2)


def sgd_step(params: ModelParams, grad: ModelParams, learning_rate: float) -> ModelParams:
    """One plain SGD update: params - learning_rate * grad."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be nonnegative")
    if (
        params.layer1_weights.shape != grad.layer1_weights.shape
        or params.layer2_weights.shape != grad.layer2_weights.shape
    ):
        raise ValueError("gradient shape does not match parameters")
    return ModelParams(
        layer1_weights=params.layer1_weights - learning_rate * grad.layer1_weights,
        layer1_bias=params.layer1_bias - learning_rate * grad.layer1_bias,
        layer2_weights=params.layer2_weights - learning_rate * grad.layer2_weights,
        layer2_bias=params.layer2_bias - learning_rate * grad.layer2_bias,
    )


def save_params(params: ModelParams, path: str | Path):
    """Write a versioned JSON checkpoint; float64 values round-trip exactly."""
    record = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "dims": {
            "d": params.input_dim,
            "hidden": params.hidden_width,
            "k": params.class_count,
        },
        "layer1_weights": params.layer1_weights.tolist(),
        "layer1_bias": params.layer1_bias.tolist(),
        "layer2_weights": params.layer2_weights.tolist(),
        "layer2_bias": params.layer2_bias.tolist(),
    }
    Path(path).write_text(json.dumps(record), encoding="utf-8")


def load_params(path: str | Path) -> ModelParams:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != PARAMS_FORMAT:
        raise ValueError(f"{path}: not a parameter checkpoint")
    if record.get("version") != PARAMS_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {record.get('version')}")
    params = ModelParams(
        layer1_weights=np.array(record["layer1_weights"], dtype=float),
        layer1_bias=np.array(record["layer1_bias"], dtype=float),
        layer2_weights=np.array(record["layer2_weights"], dtype=float),
        layer2_bias=np.array(record["layer2_bias"], dtype=float),
    )
    dims = record["dims"]
    if (params.input_dim, params.hidden_width, params.class_count) != (
        dims["d"],
        dims["hidden"],
        dims["k"],
    ):
        raise ValueError(f"{path}: dimension header disagrees with stored arrays")
    return params
