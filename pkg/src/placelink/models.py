"""Feed-forward place classifiers and the query-only wrapper around them.

One architecture covers both roles in a transfer: a linear-softmax model when
``hidden_dim`` is 0, otherwise a single tanh hidden layer. Supervised training
and soft-target distillation share the same cross-entropy core; hard labels
are lifted to one-hot targets so a single loss applies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ConfigError,
    CostLedger,
    DataError,
    Dataset,
    NumericError,
    PseudoSet,
    one_hot,
)

CHECKPOINT_MAGIC = b"PLMC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 200
    batch_size: int = 32
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")


@dataclass(frozen=True)
class ClassifierParams:
    """Dense parameters; ``w_in``/``b_in`` are None for the linear-softmax case."""

    input_dim: int
    hidden_dim: int
    output_dim: int
    w_in: np.ndarray | None
    b_in: np.ndarray | None
    w_out: np.ndarray
    b_out: np.ndarray
    seed: int = 0

    def tensors(self) -> tuple:
        """Parameter tensors in declaration order (the checkpoint order)."""
        if self.hidden_dim == 0:
            return (self.w_out, self.b_out)
        return (self.w_in, self.b_in, self.w_out, self.b_out)

    def with_tensors(self, tensors) -> "ClassifierParams":
        if self.hidden_dim == 0:
            w_out, b_out = tensors
            return replace(self, w_out=w_out, b_out=b_out)
        w_in, b_in, w_out, b_out = tensors
        return replace(self, w_in=w_in, b_in=b_in, w_out=w_out, b_out=b_out)


def init_params(input_dim: int, hidden_dim: int, output_dim: int, seed: int) -> ClassifierParams:
    if input_dim < 1 or output_dim < 2 or hidden_dim < 0:
        raise ConfigError("need input_dim >= 1, output_dim >= 2, hidden_dim >= 0")
    rng = np.random.default_rng([int(seed), 0x5EED])
    if hidden_dim == 0:
        w_in = b_in = None
        w_out = rng.normal(scale=1.0 / np.sqrt(input_dim), size=(input_dim, output_dim))
        b_out = np.zeros(output_dim)
    else:
        w_in = rng.normal(scale=1.0 / np.sqrt(input_dim), size=(input_dim, hidden_dim))
        b_in = np.zeros(hidden_dim)
        w_out = rng.normal(scale=1.0 / np.sqrt(hidden_dim), size=(hidden_dim, output_dim))
        b_out = np.zeros(output_dim)
    return ClassifierParams(input_dim, hidden_dim, output_dim, w_in, b_in, w_out, b_out, int(seed))


def softmax_rows(Z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for stability."""
    Z = np.asarray(Z, dtype=np.float64)
    E = np.exp(Z - Z.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def logits(model: ClassifierParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.input_dim:
        raise ConfigError(f"input dim {X.shape[1]} does not match model {model.input_dim}")
    if model.hidden_dim == 0:
        return X @ model.w_out + model.b_out
    H = np.tanh(X @ model.w_in + model.b_in)
    return H @ model.w_out + model.b_out


def predict_proba(model: ClassifierParams, X: np.ndarray) -> np.ndarray:
    """(n, C) matrix of class-probability rows."""
    return softmax_rows(logits(model, X))


def predict(model: ClassifierParams, x: np.ndarray) -> np.ndarray:
    """Class-probability vector for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError("predict takes a single 1-D feature vector")
    return predict_proba(model, x[None, :])[0]


def loss_and_grads(model: ClassifierParams, X: np.ndarray, T: np.ndarray, temperature: float = 1.0):
    """Mean soft-target cross-entropy at the given temperature, with analytic gradients.

    Returns (loss, grads) where grads matches ``model.tensors()`` order.
    """
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    n = X.shape[0]
    if model.hidden_dim == 0:
        Z = X @ model.w_out + model.b_out
        P = softmax_rows(Z / temperature)
        loss = -np.sum(T * _log_softmax_rows(Z / temperature)) / n
        dZ = (P - T) / (temperature * n)
        return loss, (X.T @ dZ, dZ.sum(axis=0))
    A = X @ model.w_in + model.b_in
    H = np.tanh(A)
    Z = H @ model.w_out + model.b_out
    P = softmax_rows(Z / temperature)
    loss = -np.sum(T * _log_softmax_rows(Z / temperature)) / n
    dZ = (P - T) / (temperature * n)
    dH = dZ @ model.w_out.T
    dA = dH * (1.0 - H**2)
    return loss, (X.T @ dA, dA.sum(axis=0), H.T @ dZ, dZ.sum(axis=0))


def _log_softmax_rows(Z: np.ndarray) -> np.ndarray:
    Zs = Z - Z.max(axis=1, keepdims=True)
    return Zs - np.log(np.exp(Zs).sum(axis=1, keepdims=True))


def fit(
    X: np.ndarray,
    targets: np.ndarray,
    hidden_dim: int,
    config: TrainConfig,
    init: ClassifierParams | None = None,
):
    """Mini-batch gradient descent on soft-target cross-entropy.

    Deterministic given (config.seed, init); returns (params, per-epoch loss
    history). ``init`` warm-starts from existing weights, as fine-tuning does.
    """
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or targets.ndim != 2 or X.shape[0] != targets.shape[0]:
        raise ConfigError("fit needs X (n, D) and targets (n, C) with matching n")
    if X.shape[0] == 0:
        raise ConfigError("cannot fit on an empty sample set")
    n, input_dim = X.shape
    output_dim = targets.shape[1]

    model = init if init is not None else init_params(input_dim, hidden_dim, output_dim, config.seed)
    if model.input_dim != input_dim or model.output_dim != output_dim:
        raise ConfigError("warm-start parameters do not match the data dimensions")

    rng = np.random.default_rng([config.seed, 0xBA7C])
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(model, X[idx], targets[idx], config.temperature)
            epoch_loss += loss * len(idx)
            model = model.with_tensors(
                tuple(w - config.learning_rate * g for w, g in zip(model.tensors(), grads))
            )
        losses.append(epoch_loss / n)
    return model, losses


def train_supervised(data: Dataset, hidden_dim: int, config: TrainConfig) -> ClassifierParams:
    """Supervised cross-entropy training on hard labels."""
    if len(data) == 0:
        raise ConfigError("cannot train on an empty dataset")
    targets = one_hot(data.y, len(data.class_set))
    model, _ = fit(data.X, targets, hidden_dim, config)
    return model


def distill(
    pseudo_sets, hidden_dim: int, config: TrainConfig, init: ClassifierParams | None = None
) -> ClassifierParams:
    """Train a student against the soft targets of one or more pseudo sets.

    The student starts from a fresh initialization unless ``init`` warm-starts
    it from existing weights.
    """
    parts = [p for p in pseudo_sets if len(p) > 0]
    if not parts:
        raise ConfigError("cannot distill from an empty pseudo-set union")
    union = PseudoSet.concat(parts)
    model, _ = fit(union.X, union.soft, hidden_dim, config, init=init)
    return model


class BlackBoxHandle:
    """Query-only access to a model, with every interaction metered.

    The handle exposes exactly one behavior: ``query``. There is deliberately
    no way to reach the wrapped model's weights or training data through it.
    """

    def __init__(self, predict_fn, ledger: CostLedger | None = None):
        self._predict_fn = predict_fn
        self.ledger = ledger if ledger is not None else CostLedger()

    def query(self, x: np.ndarray) -> np.ndarray:
        """Class-probability response for one vector (1-D) or a batch (2-D)."""
        x = np.asarray(x, dtype=np.float64)
        out = self._predict_fn(x)
        self.ledger.count_queries(1 if x.ndim == 1 else x.shape[0])
        return out


def blackbox_from_model(model: ClassifierParams, ledger: CostLedger | None = None) -> BlackBoxHandle:
    def _predict(x):
        return predict(model, x) if x.ndim == 1 else predict_proba(model, x)

    return BlackBoxHandle(_predict, ledger)


def save_model(model: ClassifierParams, path) -> None:
    """Versioned binary checkpoint: header then float64-LE tensors in declaration order."""
    header = struct.pack(
        "<4sIIII",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        model.input_dim,
        model.hidden_dim,
        model.output_dim,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for tensor in model.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def load_model(path) -> ClassifierParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20:
        raise DataError("checkpoint too short for its header")
    magic, version, input_dim, hidden_dim, output_dim = struct.unpack("<4sIIII", raw[:20])
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    if hidden_dim == 0:
        shapes = [(input_dim, output_dim), (output_dim,)]
    else:
        shapes = [(input_dim, hidden_dim), (hidden_dim,), (hidden_dim, output_dim), (output_dim,)]
    expected = 20 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(raw) != expected:
        raise DataError(f"checkpoint length {len(raw)}, expected {expected}")
    tensors = []
    offset = 20
    for shape in shapes:
        count = int(np.prod(shape))
        tensors.append(
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        )
        offset += 8 * count
    if not all(np.all(np.isfinite(t)) for t in tensors):
        raise NumericError("checkpoint holds non-finite weights")
    if hidden_dim == 0:
        w_in = b_in = None
        w_out, b_out = tensors
    else:
        w_in, b_in, w_out, b_out = tensors
    return ClassifierParams(input_dim, hidden_dim, output_dim, w_in, b_in, w_out, b_out)
