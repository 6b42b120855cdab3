"""Exact knowledge fusion through additive sufficient statistics.

A robot compresses its (feature, target) stream into the autocorrelation
matrix S and cross-correlation matrix Q. Those matrices add across robots and
across time, and the ridge solution W = (S + lambda*I)^-1 Q recovered from the
sum is the same one a batch solve over the pooled data would give, which is
why nothing previously absorbed can be forgotten. The wire format is a fixed
24-byte header plus the two matrices, so message size never depends on how
many samples went in.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import (
    ConfigError,
    DataError,
    NumericError,
    PseudoSet,
    entropy_rows,
)

STATS_MAGIC = b"DSIS"
STATS_VERSION = 1
_HEADER = struct.Struct("<4sHIIQH")  # magic, version, d, c, n, reserved
SOLVE_RESIDUAL_RTOL = 1e-8


@dataclass(eq=False)
class SufficientStats:
    """Raw accumulated statistics: S = sum(x x^T), Q = sum(x y^T), and the sample count.

    S carries no regularizer; lambda*I is applied once at solve time so that
    merging K robots' statistics stays exactly equal to pooling their data.
    """

    S: np.ndarray
    Q: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=np.float64)
        self.Q = np.asarray(self.Q, dtype=np.float64)
        if self.S.ndim != 2 or self.S.shape[0] != self.S.shape[1]:
            raise ConfigError(f"S must be square, got shape {self.S.shape}")
        if self.Q.ndim != 2 or self.Q.shape[0] != self.S.shape[0]:
            raise ConfigError(f"Q shape {self.Q.shape} does not match S {self.S.shape}")
        if self.n < 0:
            raise ConfigError("sample count must be >= 0")

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def c(self) -> int:
        return self.Q.shape[1]

    @classmethod
    def zeros(cls, d: int, c: int) -> "SufficientStats":
        return cls(S=np.zeros((d, d)), Q=np.zeros((d, c)), n=0)

    @classmethod
    def from_data(cls, X: np.ndarray, Y: np.ndarray) -> "SufficientStats":
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.shape[0] != Y.shape[0]:
            raise ConfigError("X and Y row counts differ")
        return cls(S=X.T @ X, Q=X.T @ Y, n=X.shape[0])

    def copy(self) -> "SufficientStats":
        return SufficientStats(S=self.S.copy(), Q=self.Q.copy(), n=self.n)

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return merge(self, other)

    def symmetry_residual(self) -> float:
        denom = max(float(np.abs(self.S).max()), 1.0)
        return float(np.abs(self.S - self.S.T).max()) / denom

    def validate(self, atol: float = 1e-10, probes: int = 8) -> None:
        """Check symmetry and non-negative Rayleigh quotients on random probes."""
        if not (np.all(np.isfinite(self.S)) and np.all(np.isfinite(self.Q))):
            raise NumericError("statistics contain non-finite entries")
        if self.symmetry_residual() > atol:
            raise NumericError(f"S is asymmetric beyond tolerance: {self.symmetry_residual():.3g}")
        if self.n == 0 and (np.any(self.S != 0) or np.any(self.Q != 0)):
            raise NumericError("empty statistics must be all-zero")
        rng = np.random.default_rng(0)
        scale = max(float(np.abs(self.S).max()), 1.0)
        for _ in range(probes):
            z = rng.normal(size=self.d)
            if float(z @ self.S @ z) < -atol * scale * float(z @ z):
                raise NumericError("S fails the positive-semidefinite probe")


def filter_by_entropy(pseudo: PseudoSet, tau: float) -> PseudoSet:
    """Keep only responses whose entropy is strictly below tau, preserving order."""
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    keep = entropy_rows(pseudo.soft) < tau
    return PseudoSet(X=pseudo.X[keep], soft=pseudo.soft[keep])


def accumulate(stats: SufficientStats, x: np.ndarray, y: np.ndarray) -> SufficientStats:
    """Fold one (feature, target) pair into the statistics in place."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != (stats.d,) or y.shape != (stats.c,):
        raise ConfigError(
            f"sample shapes {x.shape}/{y.shape} do not match statistics ({stats.d}, {stats.c})"
        )
    stats.S += np.outer(x, x)
    stats.Q += np.outer(x, y)
    stats.n += 1
    return stats


def accumulate_batch(stats: SufficientStats, X: np.ndarray, Y: np.ndarray) -> SufficientStats:
    """Fold a whole batch at once; equal to accumulating row by row."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ConfigError("accumulate_batch needs X (n, D) and Y (n, C)")
    if X.shape[1] != stats.d or Y.shape[1] != stats.c:
        raise ConfigError("batch dimensions do not match the statistics")
    stats.S += X.T @ X
    stats.Q += X.T @ Y
    stats.n += X.shape[0]
    return stats


def merge(a: SufficientStats, b: SufficientStats) -> SufficientStats:
    """Elementwise sum; the commutative, associative fan-in across robots."""
    if a.d != b.d or a.c != b.c:
        raise ConfigError(f"cannot merge ({a.d}, {a.c}) with ({b.d}, {b.c}) statistics")
    return SufficientStats(S=a.S + b.S, Q=a.Q + b.Q, n=a.n + b.n)


@dataclass(frozen=True)
class AnalyticClassifier:
    """Closed-form linear classifier: scores are x @ W, prediction is the argmax."""

    W: np.ndarray


def solve(stats: SufficientStats, lam: float) -> AnalyticClassifier:
    """W = (S + lam*I)^-1 Q via a Cholesky factorization of the regularized S.

    The residual ||(S + lam*I) W - Q||_F / ||Q||_F is checked against 1e-8.
    """
    if lam <= 0:
        raise ConfigError("lambda must be > 0")
    A = stats.S + lam * np.eye(stats.d)
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(stats.Q)):
        raise NumericError("cannot solve with non-finite statistics")
    try:
        W = cho_solve(cho_factor(A, lower=True), stats.Q)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"factorization failed: {exc}") from None
    q_norm = float(np.linalg.norm(stats.Q))
    if q_norm > 0:
        residual = float(np.linalg.norm(A @ W - stats.Q)) / q_norm
        if residual > SOLVE_RESIDUAL_RTOL:
            raise NumericError(f"solve residual {residual:.3g} exceeds {SOLVE_RESIDUAL_RTOL:g}")
    return AnalyticClassifier(W=W)


def ridge_oracle(X: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """Reference ridge solve over raw data, by hand-rolled Gaussian elimination.

    Independent of the Cholesky path on purpose: tests compare the two. Not
    meant for production use.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError("ridge_oracle needs at least one sample row")
    A = X.T @ X + lam * np.eye(X.shape[1])
    B = X.T @ Y
    return _gauss_solve(A, B)


def _gauss_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A W = B by elimination with partial pivoting and back substitution."""
    A = A.astype(np.float64).copy()
    B = B.astype(np.float64).copy()
    n = A.shape[0]
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(A[col:, col])))
        if A[pivot, col] == 0.0:
            raise NumericError("singular system in the elimination oracle")
        if pivot != col:
            A[[col, pivot]] = A[[pivot, col]]
            B[[col, pivot]] = B[[pivot, col]]
        for row in range(col + 1, n):
            factor = A[row, col] / A[col, col]
            A[row, col:] -= factor * A[col, col:]
            B[row] -= factor * B[col]
    W = np.zeros_like(B)
    for row in range(n - 1, -1, -1):
        W[row] = (B[row] - A[row, row + 1 :] @ W[row + 1 :]) / A[row, row]
    return W


def predict_analytic(classifier: AnalyticClassifier, x: np.ndarray):
    """Unnormalized class scores and the argmax class (lowest index on ties)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (classifier.W.shape[0],):
        raise ConfigError(f"input shape {x.shape} does not match W {classifier.W.shape}")
    scores = x @ classifier.W
    return scores, int(np.argmax(scores))


def predict_analytic_batch(classifier: AnalyticClassifier, X: np.ndarray) -> np.ndarray:
    """Argmax class per row."""
    X = np.asarray(X, dtype=np.float64)
    return np.argmax(X @ classifier.W, axis=1)


def stats_message_bytes(d: int, c: int) -> int:
    """Wire size of one statistics message; a function of (d, c) only, never of n."""
    return _HEADER.size + 8 * d * d + 8 * d * c


def serialize_stats(stats: SufficientStats) -> bytes:
    header = _HEADER.pack(STATS_MAGIC, STATS_VERSION, stats.d, stats.c, stats.n, 0)
    return (
        header
        + np.ascontiguousarray(stats.S, dtype="<f8").tobytes()
        + np.ascontiguousarray(stats.Q, dtype="<f8").tobytes()
    )


def deserialize_stats(data: bytes) -> SufficientStats:
    if len(data) < _HEADER.size:
        raise DataError("stats message shorter than its header")
    magic, version, d, c, n, _reserved = _HEADER.unpack_from(data)
    if magic != STATS_MAGIC:
        raise DataError(f"bad stats magic {magic!r}")
    if version != STATS_VERSION:
        raise DataError(f"unsupported stats version {version}")
    expected = stats_message_bytes(d, c)
    if len(data) != expected:
        raise DataError(f"stats message length {len(data)}, expected {expected}")
    offset = _HEADER.size
    S = np.frombuffer(data, dtype="<f8", count=d * d, offset=offset).reshape(d, d).copy()
    offset += 8 * d * d
    Q = np.frombuffer(data, dtype="<f8", count=d * c, offset=offset).reshape(d, c).copy()
    return SufficientStats(S=S, Q=Q, n=n)


@dataclass(frozen=True)
class RobotContribution:
    robot: int
    received: int
    admitted: int
    message_bytes: int


@dataclass(frozen=True)
class FusionReport:
    per_robot: tuple
    robot_stats: tuple
    global_stats: SufficientStats
    classifier: AnalyticClassifier


@dataclass(frozen=True)
class DsiConfig:
    """Solve-time regularizer and the entropy gate for admitting teacher responses."""

    lam: float = 1e-3
    tau: float | None = None  # None resolves to 0.5 * ln(C) at use time

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("lambda must be > 0")
        if self.tau is not None and self.tau < 0:
            raise ConfigError("tau must be >= 0")

    def resolve_tau(self, num_classes: int) -> float:
        return 0.5 * float(np.log(num_classes)) if self.tau is None else self.tau


def dsi_session_run(robot_streams, config: DsiConfig) -> FusionReport:
    """Entropy-gate and compress each robot's stream, merge, and solve globally.

    Statistics are merged in robot order, but merging is commutative so any
    order gives the same classifier.
    """
    streams = list(robot_streams)
    if not streams:
        raise ConfigError("need at least one robot stream")
    d = streams[0].feature_dim
    c = streams[0].num_classes
    tau = config.resolve_tau(c)

    contributions = []
    robot_stats = []
    for k, stream in enumerate(streams):
        if stream.feature_dim != d or stream.num_classes != c:
            raise ConfigError(f"robot {k} stream dimensions differ from robot 0")
        admitted = filter_by_entropy(stream, tau)
        stats = accumulate_batch(SufficientStats.zeros(d, c), admitted.X, admitted.soft)
        robot_stats.append(stats)
        contributions.append(
            RobotContribution(
                robot=k,
                received=len(stream),
                admitted=len(admitted),
                message_bytes=stats_message_bytes(d, c),
            )
        )

    global_stats = SufficientStats.zeros(d, c)
    for stats in robot_stats:
        global_stats = merge(global_stats, stats)
    return FusionReport(
        per_robot=tuple(contributions),
        robot_stats=tuple(robot_stats),
        global_stats=global_stats,
        classifier=solve(global_stats, config.lam),
    )
