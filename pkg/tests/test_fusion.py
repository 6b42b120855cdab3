import math

import numpy as np
import pytest

from placelink.core import ConfigError, DataError, NumericError, PseudoSet, shannon_entropy
from placelink.fusion import (
    AnalyticClassifier,
    DsiConfig,
    SufficientStats,
    accumulate,
    accumulate_batch,
    deserialize_stats,
    dsi_session_run,
    filter_by_entropy,
    merge,
    predict_analytic,
    predict_analytic_batch,
    ridge_oracle,
    serialize_stats,
    solve,
    stats_message_bytes,
)


def random_problem(rng, d=None, c=None, n=None):
    d = d or int(rng.integers(2, 12))
    c = c or int(rng.integers(2, 6))
    n = n or int(rng.integers(1, 64))
    X = rng.normal(size=(n, d))
    Y = rng.dirichlet(np.ones(c), size=n)
    return X, Y


class TestFilterByEntropy:
    def _mixed_set(self):
        soft = np.array(
            [
                [1.0, 0.0, 0.0, 0.0],  # entropy 0
                [0.25, 0.25, 0.25, 0.25],  # entropy ln 4
                [0.7, 0.1, 0.1, 0.1],
                [0.4, 0.4, 0.1, 0.1],
            ]
        )
        return PseudoSet(X=np.eye(4), soft=soft)

    def test_zero_tau_keeps_nothing(self):
        assert len(filter_by_entropy(self._mixed_set(), 0.0)) == 0

    def test_above_log_c_keeps_everything(self):
        out = filter_by_entropy(self._mixed_set(), math.log(4) + 1e-6)
        assert len(out) == 4

    def test_exact_subset_against_recomputed_entropies(self):
        pseudo = self._mixed_set()
        tau = 1.0
        expected = [i for i in range(4) if shannon_entropy(pseudo.soft[i]) < tau]
        out = filter_by_entropy(pseudo, tau)
        assert np.array_equal(out.X, pseudo.X[expected])

    def test_idempotent(self):
        pseudo = self._mixed_set()
        once = filter_by_entropy(pseudo, 1.2)
        twice = filter_by_entropy(once, 1.2)
        assert np.array_equal(once.X, twice.X)

    def test_order_preserved(self):
        pseudo = self._mixed_set()
        out = filter_by_entropy(pseudo, 10.0)
        assert np.array_equal(out.X, pseudo.X)


class TestAccumulate:
    def test_basis_outer_product(self):
        stats = SufficientStats.zeros(3, 2)
        e0 = np.array([1.0, 0.0, 0.0])
        accumulate(stats, e0, np.array([1.0, 0.0]))
        assert stats.S[0, 0] == 1.0 and stats.S.sum() == 1.0
        assert stats.Q[0, 0] == 1.0 and stats.Q.sum() == 1.0
        assert stats.n == 1

    def test_double_accumulation_doubles(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=4)
        y = rng.dirichlet(np.ones(3))
        once = accumulate(SufficientStats.zeros(4, 3), x, y)
        twice = accumulate(accumulate(SufficientStats.zeros(4, 3), x, y), x, y)
        assert np.allclose(twice.S, 2 * once.S)
        assert np.allclose(twice.Q, 2 * once.Q)

    def test_gram_against_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        X, Y = random_problem(rng, d=6, c=4, n=40)
        stats = SufficientStats.zeros(6, 4)
        for x, y in zip(X, Y):
            accumulate(stats, x, y)
        # oracle: naive double loop over index pairs
        S = np.zeros((6, 6))
        Q = np.zeros((6, 4))
        for i in range(6):
            for j in range(6):
                S[i, j] = sum(X[r, i] * X[r, j] for r in range(40))
            for j in range(4):
                Q[i, j] = sum(X[r, i] * Y[r, j] for r in range(40))
        assert np.linalg.norm(stats.S - S) / np.linalg.norm(S) < 1e-10
        assert np.linalg.norm(stats.Q - Q) / np.linalg.norm(Q) < 1e-10

    def test_batch_matches_loop(self):
        rng = np.random.default_rng(2)
        X, Y = random_problem(rng, d=5, c=3, n=30)
        looped = SufficientStats.zeros(5, 3)
        for x, y in zip(X, Y):
            accumulate(looped, x, y)
        batched = accumulate_batch(SufficientStats.zeros(5, 3), X, Y)
        assert np.allclose(looped.S, batched.S) and looped.n == batched.n

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            accumulate(SufficientStats.zeros(3, 2), np.zeros(4), np.zeros(2))

    def test_stays_symmetric_psd(self):
        rng = np.random.default_rng(3)
        stats = SufficientStats.zeros(5, 2)
        for _ in range(50):
            accumulate(stats, rng.normal(size=5), rng.dirichlet(np.ones(2)))
        stats.validate()


class TestMerge:
    def test_identity_element(self):
        rng = np.random.default_rng(4)
        X, Y = random_problem(rng, d=4, c=3)
        stats = SufficientStats.from_data(X, Y)
        merged = merge(SufficientStats.zeros(4, 3), stats)
        assert np.array_equal(merged.S, stats.S) and merged.n == stats.n

    def test_commutative(self):
        rng = np.random.default_rng(5)
        a = SufficientStats.from_data(*random_problem(rng, d=4, c=3))
        b = SufficientStats.from_data(*random_problem(rng, d=4, c=3))
        ab, ba = merge(a, b), merge(b, a)
        assert np.array_equal(ab.S, ba.S) and np.array_equal(ab.Q, ba.Q) and ab.n == ba.n

    def test_associative(self):
        rng = np.random.default_rng(6)
        parts = [SufficientStats.from_data(*random_problem(rng, d=3, c=2)) for _ in range(3)]
        left = merge(merge(parts[0], parts[1]), parts[2])
        right = merge(parts[0], merge(parts[1], parts[2]))
        assert np.allclose(left.S, right.S) and left.n == right.n

    @pytest.mark.parametrize("ways", [2, 4, 8])
    def test_partition_invariance(self, ways):
        rng = np.random.default_rng(7)
        X, Y = random_problem(rng, d=6, c=4, n=48)
        whole = SufficientStats.from_data(X, Y)
        merged = SufficientStats.zeros(6, 4)
        for part in np.array_split(np.arange(48), ways):
            merged = merge(merged, SufficientStats.from_data(X[part], Y[part]))
        assert np.allclose(merged.S, whole.S, atol=1e-12)
        assert np.allclose(merged.Q, whole.Q, atol=1e-12)
        assert merged.n == whole.n

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            merge(SufficientStats.zeros(3, 2), SufficientStats.zeros(4, 2))


class TestSolve:
    def test_hand_ridge_example(self):
        stats = accumulate(SufficientStats.zeros(2, 2), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        W = solve(stats, 0.01).W
        assert np.allclose(W, [[1 / 1.01, 0.0], [0.0, 0.0]])
        assert W[0, 0] == pytest.approx(0.9901, abs=1e-4)

    def test_empty_stats_closed_form(self):
        stats = SufficientStats.zeros(3, 2)
        stats.Q = np.arange(6, dtype=float).reshape(3, 2)
        W = solve(stats, 0.5).W
        assert np.allclose(W, stats.Q / 0.5)

    def test_agreement_with_oracle_random(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            d = int(rng.integers(2, 64))
            c = int(rng.integers(2, 16))
            n = int(rng.integers(1, 512))
            X = rng.normal(size=(n, d))
            Y = rng.dirichlet(np.ones(c), size=n)
            lam = float(rng.choice([1e-4, 1e-3, 1e-1]))
            W = solve(SufficientStats.from_data(X, Y), lam).W
            W_ref = ridge_oracle(X, Y, lam)
            assert np.linalg.norm(W - W_ref) / np.linalg.norm(W_ref) < 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        stats = SufficientStats.from_data(*random_problem(rng, d=8, c=3, n=50))
        a = solve(stats, 1e-3).W
        b = solve(stats, 1e-3).W
        assert np.array_equal(a, b)

    def test_invalid_lambda(self):
        with pytest.raises(ConfigError):
            solve(SufficientStats.zeros(2, 2), 0.0)

    def test_non_finite_rejected(self):
        stats = SufficientStats.zeros(2, 2)
        stats.S = np.array([[np.inf, 0.0], [0.0, 1.0]])
        with pytest.raises(NumericError):
            solve(stats, 1e-3)


class TestRidgeOracle:
    def test_large_lambda_shrinks_to_zero(self):
        rng = np.random.default_rng(10)
        X, Y = random_problem(rng, d=5, c=3, n=40)
        W = ridge_oracle(X, Y, 1e9)
        assert np.all(np.abs(W) < 1e-6)

    def test_duplicated_rows_double_the_statistics(self):
        rng = np.random.default_rng(11)
        X, Y = random_problem(rng, d=4, c=2, n=20)
        X2, Y2 = np.concatenate([X, X]), np.concatenate([Y, Y])
        doubled = SufficientStats.from_data(X2, Y2)
        single = SufficientStats.from_data(X, Y)
        assert np.allclose(doubled.S, 2 * single.S)
        W = solve(doubled, 1e-3).W
        assert np.linalg.norm(W - ridge_oracle(X2, Y2, 1e-3)) / np.linalg.norm(W) < 1e-8


class TestPredictAnalytic:
    def test_single_sample_fit_recovers_class(self):
        x = np.array([0.2, 0.8, 0.0])
        y = np.array([0.0, 1.0])
        clf = solve(accumulate(SufficientStats.zeros(3, 2), x, y), 1e-3)
        _, predicted = predict_analytic(clf, x)
        assert predicted == 1

    def test_zero_weights_tie_break(self):
        clf = AnalyticClassifier(W=np.zeros((3, 4)))
        scores, predicted = predict_analytic(clf, np.array([0.1, 0.2, 0.7]))
        assert predicted == 0
        assert np.allclose(scores, 0.0)

    def test_argmax_against_matmul_oracle(self):
        rng = np.random.default_rng(12)
        W = rng.normal(size=(6, 5))
        clf = AnalyticClassifier(W=W)
        X = rng.normal(size=(40, 6))
        batch = predict_analytic_batch(clf, X)
        for i in range(40):
            scores = [sum(X[i, d] * W[d, c] for d in range(6)) for c in range(5)]
            best = max(range(5), key=lambda c: (scores[c], -c))
            assert batch[i] == best
            assert predict_analytic(clf, X[i])[1] == best


class TestWireFormat:
    def test_length_is_sample_invariant(self):
        rng = np.random.default_rng(13)
        for n in (10, 100_000):
            X = rng.normal(size=(n, 100))
            Y = rng.dirichlet(np.ones(100), size=n)
            blob = serialize_stats(SufficientStats.from_data(X, Y))
            assert len(blob) == 160_024
        assert stats_message_bytes(100, 100) == 24 + 80_000 + 80_000

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(14)
        stats = SufficientStats.from_data(*random_problem(rng, d=7, c=4, n=33))
        back = deserialize_stats(serialize_stats(stats))
        assert np.array_equal(back.S, stats.S)
        assert np.array_equal(back.Q, stats.Q)
        assert back.n == stats.n

    def test_truncated_payload(self):
        stats = SufficientStats.zeros(3, 2)
        blob = serialize_stats(stats)
        with pytest.raises(DataError, match="length"):
            deserialize_stats(blob[:-8])

    def test_bad_magic_names_field(self):
        blob = bytearray(serialize_stats(SufficientStats.zeros(2, 2)))
        blob[:4] = b"XXXX"
        with pytest.raises(DataError, match="magic"):
            deserialize_stats(bytes(blob))

    def test_bad_version_names_field(self):
        blob = bytearray(serialize_stats(SufficientStats.zeros(2, 2)))
        blob[4] = 9
        with pytest.raises(DataError, match="version"):
            deserialize_stats(bytes(blob))


class TestSessionRun:
    def _streams(self, k, rng, d=6, c=4, n=30):
        streams = []
        for _ in range(k):
            X = rng.normal(size=(n, d))
            soft = rng.dirichlet(np.ones(c) * 0.3, size=n)
            streams.append(PseudoSet(X=X, soft=soft))
        return streams

    def test_single_robot_reduces_to_accumulate_solve(self):
        rng = np.random.default_rng(15)
        streams = self._streams(1, rng)
        config = DsiConfig(lam=1e-3, tau=100.0)
        report = dsi_session_run(streams, config)
        direct = solve(
            accumulate_batch(SufficientStats.zeros(6, 4), streams[0].X, streams[0].soft), 1e-3
        )
        assert np.array_equal(report.classifier.W, direct.W)

    def test_robot_order_does_not_matter(self):
        rng = np.random.default_rng(16)
        streams = self._streams(4, rng)
        config = DsiConfig(lam=1e-3, tau=0.8)
        a = dsi_session_run(streams, config)
        b = dsi_session_run(list(reversed(streams)), config)
        assert np.allclose(a.classifier.W, b.classifier.W, atol=1e-12)

    def test_matches_oracle_on_pooled_filtered_streams(self):
        rng = np.random.default_rng(17)
        streams = self._streams(3, rng)
        config = DsiConfig(lam=1e-2, tau=0.9)
        report = dsi_session_run(streams, config)
        pooled = [filter_by_entropy(s, 0.9) for s in streams]
        X = np.concatenate([p.X for p in pooled])
        Y = np.concatenate([p.soft for p in pooled])
        W_ref = ridge_oracle(X, Y, 1e-2)
        assert np.linalg.norm(report.classifier.W - W_ref) / np.linalg.norm(W_ref) < 1e-8

    def test_report_counts(self):
        rng = np.random.default_rng(18)
        streams = self._streams(2, rng, d=5, c=3)
        report = dsi_session_run(streams, DsiConfig(lam=1e-3, tau=0.5))
        for contribution, stream, stats in zip(report.per_robot, streams, report.robot_stats):
            assert contribution.received == len(stream)
            assert contribution.admitted == stats.n <= len(stream)
            assert contribution.message_bytes == stats_message_bytes(5, 3)
        assert report.global_stats.n == sum(s.n for s in report.robot_stats)

    def test_default_tau_is_half_log_c(self):
        assert DsiConfig().resolve_tau(16) == pytest.approx(0.5 * math.log(16))
