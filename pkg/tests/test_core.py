import math

import numpy as np
import pytest

from placelink.core import (
    ConfigError,
    CostLedger,
    Dataset,
    NumericError,
    PlaceClassSet,
    PseudoSet,
    check_distribution,
    entropy_rows,
    l1_normalize,
    one_hot,
    shannon_entropy,
    top1,
)


class TestL1Normalize:
    def test_symmetric_input(self):
        assert np.allclose(l1_normalize([2, 2]), [0.5, 0.5])

    def test_already_normalized(self):
        assert np.allclose(l1_normalize([1, 0, 0]), [1, 0, 0])

    def test_hand_division(self):
        # oracle: divide each entry by the total by hand
        assert np.allclose(l1_normalize([3, 1]), [3 / 4, 1 / 4])

    def test_rejects_all_zero(self):
        with pytest.raises(NumericError):
            l1_normalize([0.0, 0.0])

    def test_rejects_negative(self):
        with pytest.raises(NumericError):
            l1_normalize([1.0, -0.5])

    def test_sum_and_idempotence_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.uniform(0, 10, size=rng.integers(1, 50))
            if v.sum() == 0:
                continue
            p = l1_normalize(v)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.allclose(l1_normalize(p), p, rtol=0, atol=1e-15)

    def test_proportionality_preserved(self):
        p = l1_normalize([1.0, 2.0, 5.0])
        assert np.allclose(p[1] / p[0], 2.0)
        assert np.allclose(p[2] / p[0], 5.0)


class TestShannonEntropy:
    def test_one_hot_is_zero(self):
        assert shannon_entropy([1, 0, 0, 0]) == 0.0

    def test_uniform_is_log_cardinality(self):
        assert shannon_entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-12)

    def test_direct_summation_oracle(self):
        p = [0.5, 0.25, 0.25]
        expected = -sum(q * math.log(q) for q in p)  # independent direct sum
        assert shannon_entropy(p) == pytest.approx(expected, abs=1e-12)
        assert shannon_entropy(p) == pytest.approx(1.0397, abs=1e-4)

    def test_invalid_distribution_raises(self):
        with pytest.raises(NumericError):
            shannon_entropy([0.5, 0.4])
        with pytest.raises(NumericError):
            shannon_entropy([1.2, -0.2])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = l1_normalize(rng.uniform(0, 1, size=6))
            assert shannon_entropy(p) == pytest.approx(
                shannon_entropy(rng.permutation(p)), abs=1e-12
            )

    def test_maximized_at_uniform(self):
        rng = np.random.default_rng(2)
        cap = math.log(5)
        for _ in range(200):
            p = l1_normalize(rng.uniform(0, 1, size=5))
            assert shannon_entropy(p) <= cap + 1e-12

    def test_entropy_rows_matches_scalar(self):
        rng = np.random.default_rng(3)
        P = rng.dirichlet(np.ones(7), size=50)
        rows = entropy_rows(P)
        for i in range(50):
            assert rows[i] == pytest.approx(shannon_entropy(P[i]), abs=1e-12)


class TestTop1:
    def test_basic(self):
        assert top1([0.1, 0.7, 0.2]) == 1

    def test_tie_breaks_low_index(self):
        assert top1([0.5, 0.5]) == 0

    def test_four_way(self):
        assert top1([0.25, 0.25, 0.3, 0.2]) == 2

    def test_monotone_transform_invariance(self):
        # argmax is unchanged by any strictly increasing map plus renormalization
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = l1_normalize(rng.uniform(0.01, 1, size=8))
            for transform in (np.sqrt, np.square, lambda v: np.exp(2 * v)):
                q = l1_normalize(transform(p))
                assert top1(q) == top1(p)


class TestCheckDistribution:
    def test_accepts_within_tolerance(self):
        check_distribution(np.array([0.5, 0.5 + 5e-10]))

    def test_rejects_outside_tolerance(self):
        with pytest.raises(NumericError):
            check_distribution(np.array([0.5, 0.5 + 5e-9]))

    def test_rejects_nan(self):
        with pytest.raises(NumericError):
            check_distribution(np.array([np.nan, 1.0]))


class TestPlaceClassSet:
    def test_needs_two_classes(self):
        with pytest.raises(ConfigError):
            PlaceClassSet(labels=("only",))

    def test_unique_labels(self):
        with pytest.raises(ConfigError):
            PlaceClassSet(labels=("a", "a"))

    def test_of_size(self):
        cs = PlaceClassSet.of_size(4)
        assert len(cs) == 4


class TestDataset:
    def _dataset(self):
        X = np.arange(12, dtype=float).reshape(6, 2)
        y = np.array([0, 1, 0, 2, 1, 0])
        return Dataset(X=X, y=y, class_set=PlaceClassSet.of_size(3))

    def test_per_class_index_consistent(self):
        ds = self._dataset()
        for c, idx in ds.per_class_index.items():
            assert np.all(ds.y[idx] == c)
        assert sum(len(i) for i in ds.per_class_index.values()) == len(ds)

    def test_label_range_checked(self):
        with pytest.raises(ConfigError):
            Dataset(X=np.zeros((2, 2)), y=np.array([0, 5]), class_set=PlaceClassSet.of_size(3))

    def test_restrict_and_take_per_class(self):
        ds = self._dataset()
        sub = ds.restrict([0])
        assert np.all(sub.y == 0) and len(sub) == 3
        picked = ds.take_per_class(1)
        assert len(picked) == 3  # one per present class
        assert sorted(picked.y.tolist()) == [0, 1, 2]

    def test_take_per_class_keeps_row_order(self):
        ds = self._dataset()
        picked = ds.take_per_class(2, classes=[0])
        assert np.allclose(picked.X, ds.X[[0, 2]])

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            Dataset(
                X=np.array([[np.inf, 0.0]]), y=np.array([0]), class_set=PlaceClassSet.of_size(2)
            )


class TestPseudoSet:
    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            PseudoSet(X=np.zeros((3, 2)), soft=np.zeros((2, 4)))

    def test_concat(self):
        a = PseudoSet(X=np.ones((2, 3)), soft=np.full((2, 4), 0.25))
        b = PseudoSet(X=np.zeros((1, 3)), soft=np.full((1, 4), 0.25))
        u = PseudoSet.concat([a, b])
        assert len(u) == 3 and u.feature_dim == 3 and u.num_classes == 4


class TestCostLedger:
    def test_counters_monotone(self):
        ledger = CostLedger()
        snap = ledger.snapshot()
        ledger.count_queries(3)
        ledger.record_sent(2, 128)
        delta = ledger.delta_since(snap)
        assert delta.queries_issued == 3
        assert delta.pseudo_samples_sent == 2
        assert delta.bytes_sent == 128

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            CostLedger().record_sent(-1, 0)


def test_one_hot():
    T = one_hot(np.array([2, 0]), 3)
    assert np.allclose(T, [[0, 0, 1], [1, 0, 0]])
    with pytest.raises(ConfigError):
        one_hot(np.array([3]), 3)
