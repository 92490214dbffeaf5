"""Small frame-synchronous acoustic model: a feed-forward network over a
context window of feature frames, producing per-frame logits. Gradients are
computed by hand so training stays dependency-free and bit-deterministic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import binio
from .corpus import Utterance
from .ctc import LogitSequence

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    context_window: int = 1           # frames on each side
    hidden_sizes: tuple[int, ...] = (40, 24)
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes:
            raise ValueError("hidden_sizes must be non-empty")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if self.context_window < 0:
            raise ValueError("context_window must be >= 0")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {"context_window": self.context_window, "hidden_sizes": list(self.hidden_sizes),
                "activation": self.activation, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(context_window=int(d["context_window"]),
                   hidden_sizes=tuple(d["hidden_sizes"]),
                   activation=d["activation"], seed=int(d["seed"]))


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    feature_dim: int
    vocab_size: int
    weights: list[np.ndarray]       # [W0, b0, W1, b1, ..., Wout, bout]
    vocabulary_hash: str
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = layer_shapes(self.config, self.feature_dim, self.vocab_size)
        got = [w.shape for w in self.weights]
        if got != expected:
            raise ValueError(f"weight layout {got} does not match config-derived {expected}")

    def copy(self) -> "ModelCheckpoint":
        return ModelCheckpoint(self.config, self.feature_dim, self.vocab_size,
                               [w.copy() for w in self.weights], self.vocabulary_hash,
                               dict(self.training_meta))


def layer_shapes(config: ModelConfig, feature_dim: int, vocab_size: int) -> list[tuple[int, ...]]:
    dims = [feature_dim * (2 * config.context_window + 1), *config.hidden_sizes, vocab_size]
    shapes: list[tuple[int, ...]] = []
    for i in range(len(dims) - 1):
        shapes.append((dims[i], dims[i + 1]))
        shapes.append((dims[i + 1],))
    return shapes


def init_model(config: ModelConfig, feature_dim: int, vocab_size: int,
               vocabulary_hash: str) -> ModelCheckpoint:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    weights: list[np.ndarray] = []
    for shape in layer_shapes(config, feature_dim, vocab_size):
        if len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights.append(rng.uniform(-bound, bound, size=shape))
        else:
            weights.append(np.zeros(shape))
    return ModelCheckpoint(config=config, feature_dim=feature_dim, vocab_size=vocab_size,
                           weights=weights, vocabulary_hash=vocabulary_hash)


def context_expand(features: np.ndarray, window: int) -> np.ndarray:
    """Concatenate each frame with its +-window neighbours (zero padding)."""
    if window == 0:
        return features
    T, F = features.shape
    padded = np.zeros((T + 2 * window, F))
    padded[window:window + T] = features
    return np.concatenate([padded[k:k + T] for k in range(2 * window + 1)], axis=1)


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == "relu" else np.tanh(x)


def _activate_grad(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    return (pre > 0).astype(np.float64) if kind == "relu" else 1.0 - post * post


def forward_features(model: ModelCheckpoint, features: np.ndarray,
                     with_cache: bool = False):
    """Per-frame logits plus named hidden activations (and, optionally, the
    intermediate tensors needed for backprop)."""
    if features.ndim != 2 or features.shape[1] != model.feature_dim:
        raise ValueError(f"feature dim {features.shape} does not match model input {model.feature_dim}")
    x = context_expand(features, model.config.context_window)
    act = model.config.activation
    n_hidden = len(model.config.hidden_sizes)
    inputs = [x]
    pres = []
    activations: dict[str, np.ndarray] = {}
    h = x
    for i in range(n_hidden):
        W, b = model.weights[2 * i], model.weights[2 * i + 1]
        pre = h @ W + b
        h = _activate(pre, act)
        pres.append(pre)
        inputs.append(h)
        activations[f"hidden_{i}"] = h
    Wout, bout = model.weights[2 * n_hidden], model.weights[2 * n_hidden + 1]
    logits = h @ Wout + bout
    if with_cache:
        return logits, activations, (inputs, pres)
    return logits, activations


def forward(model: ModelCheckpoint, utterance: Utterance) -> tuple[LogitSequence, dict[str, np.ndarray]]:
    """Frame-synchronous forward pass: one logit row per input frame."""
    logits, activations = forward_features(model, utterance.features)
    return LogitSequence(logits, utterance.id), activations


def backward_features(model: ModelCheckpoint, cache, grad_logits: np.ndarray) -> list[np.ndarray]:
    """Gradients for every weight given d(loss)/d(logits)."""
    inputs, pres = cache
    act = model.config.activation
    n_hidden = len(model.config.hidden_sizes)
    grads: list[np.ndarray | None] = [None] * len(model.weights)
    d = grad_logits
    grads[2 * n_hidden] = inputs[n_hidden].T @ d
    grads[2 * n_hidden + 1] = d.sum(axis=0)
    d = d @ model.weights[2 * n_hidden].T
    for i in range(n_hidden - 1, -1, -1):
        d = d * _activate_grad(pres[i], inputs[i + 1], act)
        grads[2 * i] = inputs[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ model.weights[2 * i].T
    return grads  # type: ignore[return-value]


def save_checkpoint(model: ModelCheckpoint, path) -> None:
    layout = [list(w.shape) for w in model.weights]
    header = {
        "config": model.config.to_dict(),
        "feature_dim": model.feature_dim,
        "vocab_size": model.vocab_size,
        "vocabulary_hash": model.vocabulary_hash,
        "layout": layout,
        "training_meta": model.training_meta,
    }
    flat = np.concatenate([w.ravel() for w in model.weights])
    binio.write_container(path, "checkpoint", CHECKPOINT_FORMAT_VERSION, header,
                          [binio.pack_floats(flat)])


def load_checkpoint(path) -> ModelCheckpoint:
    header, records = binio.read_container(path, "checkpoint", CHECKPOINT_FORMAT_VERSION)
    if len(records) != 1:
        raise binio.FormatError(f"{path}: corrupted record (expected one weight blob)")
    layout = [tuple(s) for s in header["layout"]]
    total = sum(int(np.prod(s)) for s in layout)
    flat = binio.unpack_floats(records[0], (total,))
    weights = []
    off = 0
    for shape in layout:
        n = int(np.prod(shape))
        weights.append(flat[off:off + n].reshape(shape))
        off += n
    return ModelCheckpoint(
        config=ModelConfig.from_dict(header["config"]),
        feature_dim=int(header["feature_dim"]),
        vocab_size=int(header["vocab_size"]),
        weights=weights,
        vocabulary_hash=header["vocabulary_hash"],
        training_meta=header["training_meta"],
    )
