"""Discretize a planar workspace into place classes.

A single axis-aligned grid gives the basic cell-per-class scheme; several
grids shifted against each other give combinatorial classes (one class per
observed tuple of cell ids), which keeps points near a cell edge of one grid
apart when any other grid separates them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassId, ConfigError, PlaceClassSet

# Marker for points outside a grid's bounds / tuples never registered.
OUT_OF_BOUNDS = -1
UNKNOWN_PLACE = -1


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid over a rectangular workspace, in meters.

    ``x_shift``/``y_shift`` slide the lattice lines; cells at the workspace
    edge are clamped so every in-bounds point gets a cell in every shifted
    grid.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    rows: int
    cols: int
    x_shift: float = 0.0
    y_shift: float = 0.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError("grid bounds must satisfy x_max > x_min and y_max > y_min")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid needs at least one row and one column")

    @property
    def cell_width(self) -> float:
        return (self.x_max - self.x_min) / self.cols

    @property
    def cell_height(self) -> float:
        return (self.y_max - self.y_min) / self.rows

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols


def assign_grid_cells(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cell id per point (row * cols + col), OUT_OF_BOUNDS where outside the workspace."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError(f"points must be an (n, 2) array, got shape {pts.shape}")
    x, y = pts[:, 0], pts[:, 1]
    col = np.floor((x - grid.x_min - grid.x_shift) / grid.cell_width).astype(np.int64)
    row = np.floor((y - grid.y_min - grid.y_shift) / grid.cell_height).astype(np.int64)
    col = np.clip(col, 0, grid.cols - 1)
    row = np.clip(row, 0, grid.rows - 1)
    cells = row * grid.cols + col
    inside = (x >= grid.x_min) & (x <= grid.x_max) & (y >= grid.y_min) & (y <= grid.y_max)
    cells[~inside] = OUT_OF_BOUNDS
    return cells


def assign_grid_cell(point, grid: GridSpec) -> int:
    """Scalar form of assign_grid_cells."""
    return int(assign_grid_cells(np.asarray([point], dtype=np.float64), grid)[0])


@dataclass(frozen=True)
class CombinatorialPartition:
    """Registered tuples of per-grid cell ids, mapped to dense class ids."""

    grids: tuple
    tuple_to_class: dict

    def __post_init__(self):
        if len(self.grids) < 1:
            raise ConfigError("combinatorial partition needs at least one grid")
        classes = sorted(self.tuple_to_class.values())
        if classes != list(range(len(classes))):
            raise ConfigError("class ids must be dense 0..C-1 and tuples injective")

    @property
    def num_classes(self) -> int:
        return len(self.tuple_to_class)


@dataclass(frozen=True)
class PartitionPattern:
    """One named way of cutting the workspace: grids plus the survivor threshold."""

    grids: tuple
    min_samples_per_class: int = 1

    def __post_init__(self):
        if self.min_samples_per_class < 1:
            raise ConfigError("min_samples_per_class must be >= 1")


def _cell_tuples(points: np.ndarray, grids) -> np.ndarray:
    """(n, M) matrix of per-grid cell ids."""
    return np.stack([assign_grid_cells(points, g) for g in grids], axis=1)


def assign_combinatorial(point, partition: CombinatorialPartition) -> ClassId:
    """Class id for the point's tuple of cell ids, or UNKNOWN_PLACE if unregistered."""
    tup = tuple(int(c) for c in _cell_tuples(np.asarray([point], dtype=np.float64), partition.grids)[0])
    return partition.tuple_to_class.get(tup, UNKNOWN_PLACE)


def assign_combinatorial_many(points: np.ndarray, partition: CombinatorialPartition) -> np.ndarray:
    tuples = _cell_tuples(points, partition.grids)
    out = np.full(tuples.shape[0], UNKNOWN_PLACE, dtype=np.int64)
    for i in range(tuples.shape[0]):
        out[i] = partition.tuple_to_class.get(tuple(int(c) for c in tuples[i]), UNKNOWN_PLACE)
    return out


def build_class_set(points: np.ndarray, grids, min_samples: int = 1):
    """Enumerate observed cell-id tuples and keep the well-populated ones as classes.

    Tuples seen fewer than ``min_samples`` times are dropped; their points are
    labeled UNKNOWN_PLACE. Surviving tuples get dense class ids in
    first-observation order, which makes the labeling reproducible for a fixed
    point ordering.

    Returns (CombinatorialPartition, PlaceClassSet, labels) where labels is an
    (n,) int array of class ids or UNKNOWN_PLACE.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ConfigError("need at least one (x, y) point")
    grids = tuple(grids)
    if not grids:
        raise ConfigError("need at least one grid")
    if min_samples < 1:
        raise ConfigError("min_samples must be >= 1")

    tuples = _cell_tuples(pts, grids)
    counts: dict = {}
    order: list = []
    keys = [tuple(int(c) for c in tuples[i]) for i in range(tuples.shape[0])]
    for key in keys:
        if key not in counts:
            counts[key] = 0
            order.append(key)
        counts[key] += 1

    tuple_to_class = {}
    for key in order:
        if counts[key] >= min_samples and OUT_OF_BOUNDS not in key:
            tuple_to_class[key] = len(tuple_to_class)
    if not tuple_to_class:
        raise ConfigError("no class survived the min_samples threshold")

    partition = CombinatorialPartition(grids=grids, tuple_to_class=tuple_to_class)
    class_set = PlaceClassSet(labels=tuple(tuple_to_class))
    labels = np.asarray(
        [tuple_to_class.get(key, UNKNOWN_PLACE) for key in keys], dtype=np.int64
    )
    return partition, class_set, labels
