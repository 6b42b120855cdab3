"""Reconstructing a training set from a black-box classifier through queries alone.

The strategies trade realism of the query inputs against what the querying
robot is allowed to keep: uniform simplex noise, reciprocal-rank vectors,
entropy-screened reciprocal-rank vectors, and the replay/prior/mixup family
that reuses retained real samples. A reciprocal-rank vector can be shipped as
a k-hot index list, which packs into a few dozen bits instead of D floats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    DataError,
    Dataset,
    PseudoSet,
    l1_normalize_rows,
    entropy_rows,
)
from .models import BlackBoxHandle

PSEUDO_DUMP_MARKER = "#placelink-pseudo-set"

STRATEGIES = ("us", "rr", "entropy", "replay", "prior", "mixup")
BASE_STRATEGIES = ("rr", "entropy")


@dataclass(frozen=True)
class SamplerConfig:
    """How many pseudo-samples to request per place class, and how to get them."""

    n_per_class: int
    strategy: str
    oversample_factor: float = 10.0
    replay_count: int = 1
    khot_k: int | None = None
    base_strategy: str = "rr"
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ConfigError("n_per_class must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.oversample_factor < 1:
            raise ConfigError("oversample_factor must be >= 1")
        if self.strategy == "mixup" and not (1 <= self.replay_count <= self.n_per_class):
            raise ConfigError("mixup needs 1 <= replay_count <= n_per_class")
        if self.base_strategy not in BASE_STRATEGIES:
            raise ConfigError(f"base_strategy must be one of {BASE_STRATEGIES}")
        if self.khot_k is not None and self.khot_k < 1:
            raise ConfigError("khot_k must be >= 1 when set")


@dataclass(frozen=True)
class SamplerContext:
    """What a reconstruction run may touch beyond the teacher's query API."""

    feature_dim: int
    target_classes: tuple
    teacher_retained: Dataset | None = None
    student_retained: Dataset | None = None


@dataclass(frozen=True)
class KHotRRF:
    """The k best-ranked dimension indices of a reciprocal-rank vector, best first."""

    indices: tuple

    def __post_init__(self):
        if len(self.indices) < 1:
            raise ConfigError("k-hot vector needs at least one index")
        if len(set(self.indices)) != len(self.indices):
            raise ConfigError("k-hot indices must be distinct")
        if any(i < 0 for i in self.indices):
            raise ConfigError("k-hot indices must be non-negative")

    @property
    def k(self) -> int:
        return len(self.indices)


def sample_us(n: int, dim: int, seed) -> np.ndarray:
    """(n, dim) i.i.d. uniform draws, each row L1-normalized onto the simplex."""
    if n < 1 or dim < 2:
        raise ConfigError("need n >= 1 and dim >= 2")
    rng = np.random.default_rng(seed)
    return l1_normalize_rows(rng.uniform(size=(n, dim)))


def rrf(x: np.ndarray) -> np.ndarray:
    """Replace each entry by the reciprocal of its descending rank.

    The largest entry maps to 1, the next to 1/2, and so on; ties give the
    lower index the better rank, so the output is always a permutation of
    (1, 1/2, ..., 1/D).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("rrf takes a non-empty 1-D vector")
    return rrf_rows(x[None, :])[0]


def rrf_rows(X: np.ndarray) -> np.ndarray:
    """Row-wise rrf."""
    X = np.asarray(X, dtype=np.float64)
    order = np.argsort(-X, axis=1, kind="stable")
    out = np.empty_like(X)
    recips = 1.0 / np.arange(1, X.shape[1] + 1, dtype=np.float64)
    np.put_along_axis(out, order, np.broadcast_to(recips, X.shape), axis=1)
    return out


def sample_rr(n: int, dim: int, seed) -> np.ndarray:
    """Reciprocal-rank vectors built from uniform simplex draws."""
    return rrf_rows(sample_us(n, dim, seed))


def khot_sparsify(rrf_vec: np.ndarray, k: int) -> KHotRRF:
    """Keep the k best-ranked indices of a reciprocal-rank vector, in rank order."""
    v = np.asarray(rrf_vec, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError("khot_sparsify takes a 1-D vector")
    if not 1 <= k <= v.size:
        raise ConfigError(f"need 1 <= k <= D, got k={k}, D={v.size}")
    order = np.argsort(-v, kind="stable")[:k]
    return KHotRRF(indices=tuple(int(i) for i in order))


def khot_densify(khot: KHotRRF, dim: int) -> np.ndarray:
    """Rebuild a dense vector: reciprocal ranks at the kept indices, renormalized."""
    if khot.k > dim:
        raise ConfigError(f"k={khot.k} exceeds dimension {dim}")
    if any(i >= dim for i in khot.indices):
        raise ConfigError("k-hot index out of range for the requested dimension")
    v = np.zeros(dim)
    v[list(khot.indices)] = 1.0 / np.arange(1, khot.k + 1)
    return v / v.sum()


def khot_densify_rows(X_rrf: np.ndarray, k: int) -> np.ndarray:
    """Row-wise sparsify-then-densify of reciprocal-rank rows."""
    X_rrf = np.asarray(X_rrf, dtype=np.float64)
    dim = X_rrf.shape[1]
    if not 1 <= k <= dim:
        raise ConfigError(f"need 1 <= k <= D, got k={k}, D={dim}")
    top = np.argsort(-X_rrf, axis=1, kind="stable")[:, :k]
    recips = 1.0 / np.arange(1, k + 1, dtype=np.float64)
    out = np.zeros_like(X_rrf)
    np.put_along_axis(out, top, np.broadcast_to(recips, top.shape), axis=1)
    return out / out.sum(axis=1, keepdims=True)


def khot_index_bits(dim: int) -> int:
    """Fixed index width: ceil(log2 D) bits."""
    if dim < 2:
        raise ConfigError("need dim >= 2")
    return max(1, math.ceil(math.log2(dim)))


def khot_encoded_bits(dim: int, k: int) -> int:
    """Exact payload size of one encoded k-hot vector, in bits."""
    return k * khot_index_bits(dim)


def encode_khot(khot: KHotRRF, dim: int) -> bytes:
    """Pack the indices as fixed-width big-endian fields, best rank first."""
    if any(i >= dim for i in khot.indices):
        raise ConfigError("k-hot index out of range for the requested dimension")
    b = khot_index_bits(dim)
    total_bits = khot.k * b
    value = 0
    for idx in khot.indices:
        value = (value << b) | idx
    nbytes = (total_bits + 7) // 8
    value <<= nbytes * 8 - total_bits  # zero padding in the trailing bits
    return value.to_bytes(nbytes, "big")


def decode_khot(data: bytes, dim: int, k: int) -> KHotRRF:
    """Invert encode_khot exactly; malformed lengths or padding raise DataError."""
    b = khot_index_bits(dim)
    total_bits = k * b
    nbytes = (total_bits + 7) // 8
    if len(data) != nbytes:
        raise DataError(f"k-hot payload is {len(data)} bytes, expected {nbytes}")
    value = int.from_bytes(data, "big")
    pad = nbytes * 8 - total_bits
    if pad and value & ((1 << pad) - 1):
        raise DataError("k-hot payload has non-zero padding bits")
    value >>= pad
    indices = []
    for pos in range(k):
        shift = (k - 1 - pos) * b
        idx = (value >> shift) & ((1 << b) - 1)
        if idx >= dim:
            raise DataError(f"decoded index {idx} out of range for dimension {dim}")
        indices.append(idx)
    if len(set(indices)) != len(indices):
        raise DataError("decoded k-hot indices are not distinct")
    return KHotRRF(indices=tuple(indices))


def pseudo_sample_bytes(dim: int, num_classes: int, khot_k: int | None = None) -> int:
    """Wire size of one pseudo-sample: encoded input plus the full soft target."""
    if khot_k is None:
        input_bytes = 8 * dim
    else:
        input_bytes = (khot_encoded_bits(dim, khot_k) + 7) // 8
    return input_bytes + 8 * num_classes


def save_pseudo_dump(pseudo: PseudoSet, path, k: int, strategy: str, seed) -> None:
    """Dump a pseudo set as CSV: k-hot input indices plus the full soft targets.

    The first line carries D, k, strategy, and seed; each data row holds the
    sample's k best-ranked dimension indices (semicolon-separated, best first)
    and one column per soft-target entry. Inputs are stored at sparsification
    level k, so loading returns the k-hot densified form of each input.
    """
    dim = pseudo.feature_dim
    if not 1 <= k <= dim:
        raise ConfigError(f"need 1 <= k <= D, got k={k}, D={dim}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{PSEUDO_DUMP_MARKER} D={dim} k={k} strategy={strategy} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["indices"] + [f"t{i}" for i in range(pseudo.num_classes)])
        for i in range(len(pseudo)):
            indices = khot_sparsify(pseudo.X[i], k).indices
            writer.writerow(
                [";".join(str(j) for j in indices)]
                + [repr(float(v)) for v in pseudo.soft[i]]
            )


def load_pseudo_dump(path):
    """Read a pseudo-set dump; returns (PseudoSet, metadata dict)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(PSEUDO_DUMP_MARKER):
            raise DataError(f"{path}: not a pseudo-set dump")
        meta = {}
        for token in first[len(PSEUDO_DUMP_MARKER) :].split():
            key, _, value = token.partition("=")
            meta[key] = value
        try:
            dim = int(meta["D"])
            k = int(meta["k"])
        except (KeyError, ValueError):
            raise DataError(f"{path}: dump header must carry integer D and k") from None
        meta["D"], meta["k"] = dim, k

        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing column header") from None
        num_classes = len(header) - 1
        if header[0] != "indices" or num_classes < 2:
            raise DataError(f"{path}: unexpected dump columns {header[:3]}")

        X_rows, soft_rows = [], []
        for rownum, row in enumerate(reader, start=3):
            if len(row) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(row)} fields")
            try:
                indices = tuple(int(t) for t in row[0].split(";"))
                soft_rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            if len(indices) != k:
                raise DataError(f"{path}: row {rownum} holds {len(indices)} indices, header says k={k}")
            X_rows.append(khot_densify(KHotRRF(indices=indices), dim))
    return (
        PseudoSet(X=np.asarray(X_rows).reshape(-1, dim), soft=np.asarray(soft_rows).reshape(-1, num_classes)),
        meta,
    )


def _query_rows(teacher: BlackBoxHandle, X: np.ndarray) -> np.ndarray:
    responses = teacher.query(X)
    return np.atleast_2d(np.asarray(responses, dtype=np.float64))


def _send(teacher: BlackBoxHandle, count: int, dim: int, num_classes: int, khot_k) -> None:
    teacher.ledger.record_sent(count, count * pseudo_sample_bytes(dim, num_classes, khot_k))


def sample_entropy(
    teacher: BlackBoxHandle,
    n: int,
    dim: int,
    oversample_factor: float = 10.0,
    seed=0,
    khot_k: int | None = None,
) -> PseudoSet:
    """Query an oversampled reciprocal-rank pool and keep the n most confident responses.

    Every candidate costs a query; only the n selected pairs count as sent.
    """
    if oversample_factor < 1:
        raise ConfigError("oversample_factor must be >= 1")
    m = math.ceil(oversample_factor * n)
    cand = sample_rr(m, dim, seed)
    if khot_k is not None:
        cand = khot_densify_rows(cand, khot_k)
    responses = _query_rows(teacher, cand)
    picked = np.argsort(entropy_rows(responses), kind="stable")[:n]
    picked = np.sort(picked)  # keep candidate order within the selection
    out = PseudoSet(X=cand[picked], soft=responses[picked])
    _send(teacher, len(out), dim, responses.shape[1], khot_k)
    return out


def sample_replay(retained: Dataset, teacher: BlackBoxHandle, n: int) -> PseudoSet:
    """Query the teacher on up to n retained inputs, in dataset order."""
    if len(retained) == 0:
        raise ConfigError("replay needs a non-empty retained dataset")
    X = retained.X[: min(n, len(retained))]
    responses = _query_rows(teacher, X)
    out = PseudoSet(X=X.copy(), soft=responses)
    _send(teacher, len(out), X.shape[1], responses.shape[1], None)
    return out


def sample_prior(student_retained: Dataset, teacher: BlackBoxHandle, n: int) -> PseudoSet:
    """Like replay, but the query inputs come from the student's own retained data."""
    return sample_replay(student_retained, teacher, n)


def sample_mixup(
    retained: Dataset,
    teacher: BlackBoxHandle,
    n: int,
    replay_count: int,
    base_strategy: str = "rr",
    seed=0,
    khot_k: int | None = None,
    classes=None,
    oversample_factor: float = 10.0,
) -> PseudoSet:
    """Per covered class: replay_count retained samples, then base-strategy fill-up.

    The replay block comes first (class by class), followed by the
    (n - replay_count) * num_classes block from the base strategy.
    """
    if not 1 <= replay_count <= n:
        raise ConfigError("need 1 <= replay_count <= n")
    if base_strategy not in BASE_STRATEGIES:
        raise ConfigError(f"base_strategy must be one of {BASE_STRATEGIES}")
    covered = retained.classes_present() if classes is None else sorted(classes)
    if not covered:
        raise ConfigError("mixup needs at least one covered class")
    for c in covered:
        have = len(retained.per_class_index.get(c, ()))
        if have < replay_count:
            raise ConfigError(f"class {c} retains {have} samples, mixup needs {replay_count}")

    replay_part = sample_replay(
        retained.take_per_class(replay_count, classes=covered), teacher, replay_count * len(covered)
    )
    fill = (n - replay_count) * len(covered)
    if fill == 0:
        return replay_part
    base_part = _base_block(
        teacher, fill, retained.X.shape[1], base_strategy, oversample_factor, seed, khot_k
    )
    return PseudoSet.concat([replay_part, base_part])


def _base_block(
    teacher: BlackBoxHandle,
    count: int,
    dim: int,
    base_strategy: str,
    oversample_factor: float,
    seed,
    khot_k: int | None,
) -> PseudoSet:
    """Query-only fill block: rr or entropy."""
    if base_strategy == "entropy":
        return sample_entropy(teacher, count, dim, oversample_factor, seed, khot_k)
    X = sample_rr(count, dim, seed)
    if khot_k is not None:
        X = khot_densify_rows(X, khot_k)
    responses = _query_rows(teacher, X)
    out = PseudoSet(X=X, soft=responses)
    _send(teacher, len(out), dim, responses.shape[1], khot_k)
    return out


def reconstruct_self_set(
    handle: BlackBoxHandle,
    config: SamplerConfig,
    feature_dim: int,
    target_classes,
    corpus: Dataset | None,
) -> PseudoSet:
    """Reconstruct the classes only this model knows, by querying itself.

    Query-only strategies behave exactly as against a foreign teacher. The
    retained-data strategies replay from the model's own corpus; classes the
    corpus no longer covers fall back to rank-vector queries so the output
    still carries the full per-class budget.
    """
    target_classes = tuple(target_classes)
    if not target_classes:
        raise ConfigError("self-reconstruction needs at least one target class")
    if config.strategy in ("us", "rr", "entropy"):
        return reconstruct_pseudo_set(
            handle, config, SamplerContext(feature_dim=feature_dim, target_classes=target_classes)
        )

    n = config.n_per_class
    total = n * len(target_classes)
    before = handle.ledger.snapshot()
    retain = config.replay_count if config.strategy == "mixup" else n
    subset = (
        corpus.take_per_class(retain, classes=target_classes)
        if corpus is not None and len(corpus)
        else None
    )
    parts = []
    if subset is not None and len(subset):
        parts.append(sample_replay(subset, handle, len(subset)))
    fill = total - sum(len(p) for p in parts) if config.strategy == "mixup" else 0
    if not parts:
        fill = total  # nothing retained for these classes at all
    if fill > 0:
        parts.append(
            _base_block(
                handle,
                fill,
                feature_dim,
                config.base_strategy,
                config.oversample_factor,
                config.seed,
                config.khot_k,
            )
        )
    out = PseudoSet.concat(parts)
    out.cost = handle.ledger.delta_since(before)
    return out


def reconstruct_pseudo_set(
    teacher: BlackBoxHandle, config: SamplerConfig, context: SamplerContext
) -> PseudoSet:
    """Run the configured strategy against one teacher and meter the traffic.

    Class-targeted strategies (replay, prior, mixup) draw their per-class
    quota from the retained data, while query-only strategies cannot aim at a
    class and instead request n_per_class times the number of covered classes.
    The returned set carries the ledger delta of this reconstruction.
    """
    if not context.target_classes:
        raise ConfigError("reconstruction needs at least one target class")
    n = config.n_per_class
    dim = context.feature_dim
    total = n * len(context.target_classes)
    before = teacher.ledger.snapshot()

    if config.strategy in ("us", "rr"):
        if config.strategy == "us":
            X = sample_us(total, dim, config.seed)
            khot_k = None  # uniform draws are not rank vectors, so no sparsification
        else:
            X = sample_rr(total, dim, config.seed)
            khot_k = config.khot_k
            if khot_k is not None:
                X = khot_densify_rows(X, khot_k)
        responses = _query_rows(teacher, X)
        out = PseudoSet(X=X, soft=responses)
        _send(teacher, len(out), dim, responses.shape[1], khot_k)
    elif config.strategy == "entropy":
        out = sample_entropy(
            teacher, total, dim, config.oversample_factor, config.seed, config.khot_k
        )
    elif config.strategy == "replay":
        if context.teacher_retained is None or len(context.teacher_retained) == 0:
            raise ConfigError("replay strategy needs retained teacher data in the context")
        subset = context.teacher_retained.take_per_class(n, classes=context.target_classes)
        if len(subset) == 0:
            raise ConfigError("retained teacher data covers none of the target classes")
        out = sample_replay(subset, teacher, len(subset))
    elif config.strategy == "prior":
        if context.student_retained is None or len(context.student_retained) == 0:
            raise ConfigError("prior strategy needs retained student data in the context")
        subset = context.student_retained.take_per_class(n)
        out = sample_prior(subset, teacher, len(subset))
    else:  # mixup
        if context.teacher_retained is None or len(context.teacher_retained) == 0:
            raise ConfigError("mixup strategy needs retained teacher data in the context")
        out = sample_mixup(
            context.teacher_retained,
            teacher,
            n,
            config.replay_count,
            config.base_strategy,
            config.seed,
            config.khot_k,
            classes=context.target_classes,
            oversample_factor=config.oversample_factor,
        )

    out.cost = teacher.ledger.delta_since(before)
    return out
