"""Synthetic multi-session feature worlds, plus CSV ingestion of precomputed features.

Features live on the probability simplex: each class has an L1-normalized
prototype and samples are Dirichlet draws concentrated around it. A session
perturbs every prototype by a session-specific drift vector before sampling,
which is the stand-in for appearance change between visits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    DataError,
    Dataset,
    PlaceClassSet,
    l1_normalize,
)

_PROTO_FLOOR = 1e-9


@dataclass(frozen=True)
class WorldModel:
    """Class-conditional feature distributions shared by all sessions of one experiment."""

    class_set: PlaceClassSet
    feature_dim: int
    prototypes: np.ndarray  # (C, D), rows on the simplex
    concentration: float
    seed: int

    @property
    def num_classes(self) -> int:
        return len(self.class_set)


@dataclass(frozen=True)
class SessionSpec:
    """One visit to the world: which classes are seen and how far appearance drifts."""

    session_id: int
    visited_classes: tuple
    drift_magnitude: float = 0.0
    samples_per_class: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.drift_magnitude < 0:
            raise ConfigError("drift_magnitude must be >= 0")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")


def build_world(num_classes: int, feature_dim: int, concentration: float, seed: int) -> WorldModel:
    """Draw pairwise-distinct L1-normalized class prototypes, deterministically per seed."""
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if feature_dim < 2:
        raise ConfigError("need feature_dim >= 2")
    if concentration <= 0:
        raise ConfigError("concentration must be > 0")
    rng = np.random.default_rng([int(seed), 0x9E37])
    protos = rng.dirichlet(np.ones(feature_dim), size=num_classes)
    # Redraw on the (measure-zero) chance two prototypes collide.
    for _ in range(16):
        if len({tuple(np.round(row, 12)) for row in protos}) == num_classes:
            break
        protos = rng.dirichlet(np.ones(feature_dim), size=num_classes)
    else:
        raise ConfigError("could not draw distinct prototypes")
    return WorldModel(
        class_set=PlaceClassSet.of_size(num_classes),
        feature_dim=feature_dim,
        prototypes=protos,
        concentration=float(concentration),
        seed=int(seed),
    )


def session_prototype(world: WorldModel, class_id: int, spec: SessionSpec) -> np.ndarray:
    """The class prototype as it appears in one session: drifted and renormalized.

    The drift draw depends on the session id but not on ``spec.seed``, so two
    specs of the same session (say a train and a test split) see the same
    appearance while drawing independent samples.
    """
    base = world.prototypes[class_id]
    if spec.drift_magnitude == 0:
        return base
    rng = np.random.default_rng([world.seed, spec.session_id, class_id, 1])
    g = rng.normal(size=world.feature_dim)
    g *= spec.drift_magnitude / np.linalg.norm(g)
    return l1_normalize(np.clip(base + g, _PROTO_FLOOR, None))


def generate_session(world: WorldModel, spec: SessionSpec) -> Dataset:
    """Sample one session's dataset; bit-identical for identical (world, spec)."""
    if not spec.visited_classes:
        raise ConfigError("session must visit at least one class")
    visited = sorted(int(c) for c in spec.visited_classes)
    if visited[0] < 0 or visited[-1] >= world.num_classes:
        raise ConfigError("visited classes out of range for the world")

    blocks = []
    labels = []
    for c in visited:
        proto = session_prototype(world, c, spec)
        rng = np.random.default_rng([world.seed, spec.seed, spec.session_id, c, 2])
        alpha = np.clip(world.concentration * proto, _PROTO_FLOOR, None)
        blocks.append(rng.dirichlet(alpha, size=spec.samples_per_class))
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    return Dataset(
        X=np.concatenate(blocks, axis=0),
        y=np.concatenate(labels),
        class_set=world.class_set,
    )


def save_csv_dataset(dataset: Dataset, path, class_column: str = "label") -> None:
    """Write a dataset as UTF-8 CSV with LF line endings: label column then f0..f{D-1}."""
    header = [class_column] + [f"f{i}" for i in range(dataset.feature_dim)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            writer.writerow([int(dataset.y[i])] + [repr(float(v)) for v in dataset.X[i]])


def load_csv_dataset(path, class_column: str = "label", feature_columns=None) -> Dataset:
    """Read a feature CSV into a Dataset.

    Labels are mapped to dense class ids in first-observation order. Ragged
    rows, non-numeric features, or unknown columns raise DataError naming the
    offending row.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if class_column not in header:
            raise DataError(f"{path}: class column {class_column!r} not in header")
        if feature_columns is None:
            feature_columns = [h for h in header if h != class_column]
        missing = [c for c in feature_columns if c not in header]
        if missing:
            raise DataError(f"{path}: unknown feature columns {missing}")
        if not feature_columns:
            raise DataError(f"{path}: no feature columns")
        label_pos = header.index(class_column)
        feature_pos = [header.index(c) for c in feature_columns]

        rows = []
        labels = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {rownum} has {len(row)} fields, expected {len(header)}"
                )
            try:
                rows.append([float(row[p]) for p in feature_pos])
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            labels.append(row[label_pos])

    if not rows:
        raise DataError(f"{path}: no data rows")
    label_order = []
    label_to_id: dict = {}
    for lab in labels:
        if lab not in label_to_id:
            label_to_id[lab] = len(label_order)
            label_order.append(lab)
    if len(label_order) < 2:
        raise DataError(f"{path}: need at least 2 distinct classes, got {len(label_order)}")
    return Dataset(
        X=np.asarray(rows, dtype=np.float64),
        y=np.asarray([label_to_id[lab] for lab in labels], dtype=np.int64),
        class_set=PlaceClassSet(labels=tuple(label_order)),
    )
