"""Shared domain types and the elementary simplex operations built on by every module.

Feature vectors and class-probability vectors are plain float64 numpy arrays;
the dataclasses below only bundle them with the bookkeeping (class sets,
per-class indices, communication counters) that the rest of the package needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

DISTRIBUTION_ATOL = 1e-9


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from a tuple of integer coordinates."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])

# Dense class index into a PlaceClassSet.
ClassId = int


class PlacelinkError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PlacelinkError):
    """Invalid configuration, arguments, or strategy/context mismatch."""


class DataError(PlacelinkError):
    """Malformed external data: CSV rows, checkpoints, stats messages, manifests."""


class NumericError(PlacelinkError):
    """Numerical failure: invalid distribution, degenerate input, failed solve."""


@dataclass(frozen=True)
class PlaceClassSet:
    """Ordered set of opaque place-class descriptors; positions are the dense class ids."""

    labels: tuple

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ConfigError(f"need at least 2 place classes, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("place class labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def of_size(cls, num_classes: int) -> "PlaceClassSet":
        return cls(labels=tuple(range(num_classes)))


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    y: ClassId


@dataclass(frozen=True)
class PseudoSample:
    x: np.ndarray
    soft: np.ndarray


@dataclass
class Dataset:
    """Hard-labeled samples in column form: X is (n, D) float64, y is (n,) int64.

    Rows keep insertion order; ``per_class_index`` maps each class id to the
    row indices holding that class, in row order.
    """

    X: np.ndarray
    y: np.ndarray
    class_set: PlaceClassSet

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ConfigError(f"dataset X must be 2-D, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ConfigError(f"dataset y shape {self.y.shape} does not match X {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise NumericError("dataset features contain non-finite values")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.class_set)):
            raise ConfigError("dataset labels out of range for the class set")

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(x=self.X[i], y=int(self.y[i]))

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @cached_property
    def per_class_index(self) -> dict:
        index: dict = {}
        for c in np.unique(self.y):
            index[int(c)] = np.flatnonzero(self.y == c)
        return index

    def classes_present(self) -> list:
        return sorted(self.per_class_index)

    def restrict(self, classes: Sequence[ClassId]) -> "Dataset":
        """Rows whose label lies in ``classes``; the class set is unchanged."""
        keep = np.isin(self.y, np.asarray(sorted(classes), dtype=np.int64))
        return Dataset(X=self.X[keep], y=self.y[keep], class_set=self.class_set)

    def take_per_class(self, n: int, classes: Sequence[ClassId] | None = None) -> "Dataset":
        """First ``n`` rows of each requested class, in row order."""
        wanted = self.classes_present() if classes is None else sorted(classes)
        picks = [self.per_class_index[c][:n] for c in wanted if c in self.per_class_index]
        idx = np.concatenate(picks) if picks else np.zeros(0, dtype=np.int64)
        return Dataset(X=self.X[idx], y=self.y[idx], class_set=self.class_set)

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise ConfigError("cannot concatenate zero datasets")
        return cls(
            X=np.concatenate([p.X for p in parts], axis=0),
            y=np.concatenate([p.y for p in parts], axis=0),
            class_set=parts[0].class_set,
        )


@dataclass(frozen=True)
class CostDelta:
    """Communication cost attributable to one reconstruction."""

    queries_issued: int = 0
    pseudo_samples_sent: int = 0
    bytes_sent: int = 0


@dataclass
class PseudoSet:
    """Soft-labeled reconstruction: X is (n, D), soft is (n, C) with simplex rows."""

    X: np.ndarray
    soft: np.ndarray
    cost: CostDelta | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.soft = np.asarray(self.soft, dtype=np.float64)
        if self.X.ndim != 2 or self.soft.ndim != 2 or self.X.shape[0] != self.soft.shape[0]:
            raise ConfigError(
                f"pseudo set shapes inconsistent: X {self.X.shape}, soft {self.soft.shape}"
            )
        if not np.all(np.isfinite(self.X)):
            raise NumericError("pseudo inputs contain non-finite values")

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> PseudoSample:
        return PseudoSample(x=self.X[i], soft=self.soft[i])

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_classes(self) -> int:
        return self.soft.shape[1]

    @classmethod
    def empty(cls, feature_dim: int, num_classes: int) -> "PseudoSet":
        return cls(X=np.zeros((0, feature_dim)), soft=np.zeros((0, num_classes)))

    @classmethod
    def concat(cls, parts: Sequence["PseudoSet"]) -> "PseudoSet":
        if not parts:
            raise ConfigError("cannot concatenate zero pseudo sets")
        return cls(
            X=np.concatenate([p.X for p in parts], axis=0),
            soft=np.concatenate([p.soft for p in parts], axis=0),
        )


@dataclass
class CostLedger:
    """Monotone counters for the traffic seen by one black-box handle."""

    pseudo_samples_sent: int = 0
    bytes_sent: int = 0
    queries_issued: int = 0

    def count_queries(self, n: int = 1) -> None:
        if n < 0:
            raise ConfigError("query count must be non-negative")
        self.queries_issued += n

    def record_sent(self, samples: int, nbytes: int) -> None:
        if samples < 0 or nbytes < 0:
            raise ConfigError("sent counters must be non-negative")
        self.pseudo_samples_sent += samples
        self.bytes_sent += nbytes

    def snapshot(self) -> tuple:
        return (self.queries_issued, self.pseudo_samples_sent, self.bytes_sent)

    def delta_since(self, snap: tuple) -> CostDelta:
        return CostDelta(
            queries_issued=self.queries_issued - snap[0],
            pseudo_samples_sent=self.pseudo_samples_sent - snap[1],
            bytes_sent=self.bytes_sent - snap[2],
        )


def l1_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a non-negative vector so its entries sum to 1."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise NumericError("cannot normalize an empty vector")
    if np.any(v < 0):
        raise NumericError("cannot L1-normalize a vector with negative entries")
    total = v.sum()
    if total <= 0:
        raise NumericError("cannot L1-normalize an all-zero vector")
    return v / total


def l1_normalize_rows(M: np.ndarray) -> np.ndarray:
    """Row-wise l1_normalize with the same preconditions per row."""
    M = np.asarray(M, dtype=np.float64)
    if np.any(M < 0):
        raise NumericError("cannot L1-normalize rows with negative entries")
    totals = M.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise NumericError("cannot L1-normalize an all-zero row")
    return M / totals


def check_distribution(p: np.ndarray, atol: float = DISTRIBUTION_ATOL) -> np.ndarray:
    """Validate a class-probability vector; returns it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise NumericError(f"distribution must be a non-empty 1-D vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise NumericError("distribution has non-finite entries")
    if np.any(p < 0):
        raise NumericError("distribution has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise NumericError(f"distribution sums to {p.sum():.12g}, not 1")
    return p


def shannon_entropy(p: np.ndarray) -> float:
    """Entropy of a probability vector in nats, with 0*log(0) taken as 0."""
    p = check_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_rows(P: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy (nats) of a matrix of probability rows."""
    P = np.asarray(P, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return -terms.sum(axis=1)


def top1(p: np.ndarray) -> ClassId:
    """Index of the largest probability; ties go to the lowest index."""
    p = check_distribution(p)
    return int(np.argmax(p))


def one_hot(y: np.ndarray, num_classes: int) -> np.ndarray:
    """Lift hard labels (n,) to one-hot soft targets (n, num_classes)."""
    y = np.asarray(y, dtype=np.int64)
    if len(y) and (y.min() < 0 or y.max() >= num_classes):
        raise ConfigError("labels out of range for one-hot encoding")
    T = np.zeros((y.shape[0], num_classes), dtype=np.float64)
    T[np.arange(y.shape[0]), y] = 1.0
    return T
