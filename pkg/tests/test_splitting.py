import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expdb import (
    Column,
    DatasetParameters,
    IntegrityError,
    InvalidInputError,
    SplitMix64,
    Table,
    make_holdout_split,
    make_stratified_folds,
    realize_split,
)

from .helpers import header, random_table


class TestSplitMix64:
    def test_known_stream(self):
        # reference values for seed 1234567 from the published algorithm
        rng = SplitMix64(1234567)
        first = [rng.next_uint64() for _ in range(3)]
        assert first == [6457827717110365317, 3203168211198807973, 9817491932198370423]

    def test_same_seed_same_stream(self):
        a, b = SplitMix64(42), SplitMix64(42)
        assert [a.next_uint64() for _ in range(10)] == [b.next_uint64() for _ in range(10)]

    def test_randbelow_range(self):
        rng = SplitMix64(9)
        for _ in range(1000):
            assert 0 <= rng.randbelow(7) < 7


class TestMakeStratifiedFolds:
    def test_balanced_binary_ten_rows(self):
        table = Table(
            "t",
            [
                Column("x", "numeric", list(range(10))),
                Column("y", "categorical", ["a", "b"] * 5),
            ],
            target_column="y",
        )
        folds = make_stratified_folds(table, k=5, seed=3)
        labels = table.column("y").values
        for fold in folds:
            assert len(fold.test_indices) == 2
            assert sorted(labels[i] for i in fold.test_indices) == ["a", "b"]

    def test_determinism(self):
        rng = random.Random(0)
        table = random_table(rng, 57, 3)
        a = make_stratified_folds(table, k=5, seed=99)
        b = make_stratified_folds(table, k=5, seed=99)
        for fa, fb in zip(a, b):
            assert fa.train_indices == fb.train_indices
            assert fa.test_indices == fb.test_indices

    def test_unbalanced_counting_oracle(self):
        # 97 rows split 50/30/17 across three classes
        labels = ["a"] * 50 + ["b"] * 30 + ["c"] * 17
        random.Random(1).shuffle(labels)
        table = Table(
            "t",
            [Column("x", "numeric", list(range(97))), Column("y", "categorical", labels)],
            target_column="y",
        )
        folds = make_stratified_folds(table, k=5, seed=12)
        # independent counting check per class and fold
        per_class_counts = {
            cls: [
                sum(1 for i in fold.test_indices if labels[i] == cls) for fold in folds
            ]
            for cls in ("a", "b", "c")
        }
        for cls, counts in per_class_counts.items():
            assert sum(counts) == labels.count(cls)
            assert max(counts) - min(counts) <= 1, (cls, counts)

    def test_partition(self):
        rng = random.Random(4)
        table = random_table(rng, 41, 4)
        folds = make_stratified_folds(table, k=5, seed=8)
        all_test = [i for f in folds for i in f.test_indices]
        assert sorted(all_test) == list(range(41))
        for fold in folds:
            assert set(fold.train_indices) == set(range(41)) - set(fold.test_indices)

    def test_k_larger_than_rows_rejected(self):
        rng = random.Random(4)
        table = random_table(rng, 4, 2)
        with pytest.raises(InvalidInputError):
            make_stratified_folds(table, k=5, seed=0)

    def test_missing_target_rejected(self):
        table = Table("t", [Column("x", "numeric", [1.0, 2.0])])
        with pytest.raises(InvalidInputError):
            make_stratified_folds(table, k=2, seed=0)

    def test_missing_target_values_form_own_stratum(self):
        table = Table(
            "t",
            [
                Column("x", "numeric", list(range(8))),
                Column("y", "categorical", ["a", "a", None, "b", "b", None, "a", "b"]),
            ],
            target_column="y",
        )
        folds = make_stratified_folds(table, k=2, seed=5)
        all_test = sorted(i for f in folds for i in f.test_indices)
        assert all_test == list(range(8))

    @settings(max_examples=30, deadline=None)
    @given(
        n=st.integers(10, 120),
        n_classes=st.integers(2, 5),
        k=st.integers(2, 6),
        seed=st.integers(0, 2**63),
    )
    def test_stratification_property(self, n, n_classes, k, seed):
        table = random_table(random.Random(seed % 1000), n, n_classes)
        if k > n:
            return
        folds = make_stratified_folds(table, k=k, seed=seed)
        labels = table.column(table.target_column).values
        # partition
        all_test = sorted(i for f in folds for i in f.test_indices)
        assert all_test == list(range(n))
        # per-class balance
        for cls in set(labels):
            counts = [sum(1 for i in f.test_indices if labels[i] == cls) for f in folds]
            assert max(counts) - min(counts) <= 1
        # both sides non-empty
        for f in folds:
            assert f.test_indices and f.train_indices


class TestRealizeSplit:
    def test_explicit_passthrough(self):
        table = Table("t", [Column("x", "numeric", [1.0, 2.0, 3.0])])
        params = DatasetParameters(
            header=header(),
            split_method="explicit",
            train_indices=[0, 2],
            test_indices=[1],
        )
        indices = realize_split(table, params)
        assert indices.train == [0, 2] and indices.test == [1]

    def test_seed_only_recomputation_matches_generator(self):
        rng = random.Random(7)
        table = random_table(rng, 30, 3)
        folds = make_stratified_folds(table, k=5, seed=21)
        for fold in folds:
            spec_only = DatasetParameters(
                header=header(),
                split_method="stratified_kfold",
                train_ratio=fold.train_ratio,
                n_folds=fold.n_folds,
                fold_index=fold.fold_index,
                seed=fold.seed,
            )
            realized = realize_split(table, spec_only)
            assert realized.train == fold.train_indices
            assert realized.test == fold.test_indices

    def test_out_of_bounds_indices_rejected(self):
        table = Table("t", [Column("x", "numeric", [0.0] * 100)])
        params = DatasetParameters(
            header=header(),
            split_method="explicit",
            train_indices=[0, 1],
            test_indices=[999],
        )
        with pytest.raises(IntegrityError):
            realize_split(table, params)

    def test_holdout_recomputation(self):
        rng = random.Random(2)
        table = random_table(rng, 40, 2)
        params = make_holdout_split(table, train_ratio=0.8, seed=4)
        assert len(params.test_indices) == 8
        recomputed = realize_split(
            table,
            DatasetParameters(
                header=header(), split_method="holdout", train_ratio=0.8, seed=4
            ),
        )
        assert recomputed.test == params.test_indices
        assert recomputed.train == params.train_indices
