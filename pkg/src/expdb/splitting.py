"""Deterministic, seed-controlled dataset splitting.

Shuffling uses SplitMix64 (Steele, Lea & Flood 2014), a fully specified
64-bit generator, driving an unbiased rejection-sampled Fisher-Yates
shuffle.  The same (table, k, seed) therefore yields bit-identical folds on
every platform and release, and the exact index lists are recorded in the
resulting split documents so stored splits can be re-materialised verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IntegrityError, InvalidInputError
from .metamodel import CommonHeader, DatasetParameters, Table, is_missing

_MASK64 = (1 << 64) - 1
_MISSING_STRATUM = object()


class SplitMix64:
    """SplitMix64 PRNG; state advances by the 64-bit golden gamma."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise InvalidInputError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_uint64()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass
class SplitIndices:
    train: list[int]
    test: list[int]


def _strata(table: Table) -> list[list[int]]:
    """Per-class row-index lists, ordered by class label (missing targets
    form their own stratum, last)."""
    target = table.column(table.target_column)
    groups: dict[object, list[int]] = {}
    for i, value in enumerate(target.values):
        key = _MISSING_STRATUM if is_missing(value) else value
        groups.setdefault(key, []).append(i)
    ordered = sorted(
        groups.items(), key=lambda kv: (kv[0] is _MISSING_STRATUM, str(kv[0]))
    )
    return [idxs for _, idxs in ordered]


def make_stratified_folds(
    table: Table,
    k: int,
    seed: int,
    dataset_id: str = "",
    authors: tuple[str, ...] = ("splitter",),
) -> list[DatasetParameters]:
    """Produce k stratified cross-validation folds with explicit indices.

    Each class's indices are shuffled once, then dealt to folds round-robin
    with a rolling start offset, so per-class test counts differ by at most
    one and total fold sizes stay balanced.  Classes with fewer than k
    members are spread best-effort.
    """
    table.validate()
    if table.target_column is None:
        raise InvalidInputError("stratified folds need a target column")
    n = table.n_rows
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if k > n:
        raise InvalidInputError(f"k={k} exceeds the {n} available rows")

    rng = SplitMix64(seed)
    fold_test: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for idxs in _strata(table):
        idxs = list(idxs)
        rng.shuffle(idxs)
        for j, row in enumerate(idxs):
            fold_test[(offset + j) % k].append(row)
        offset = (offset + len(idxs)) % k

    folds = []
    all_rows = set(range(n))
    for fold_index in range(k):
        test = sorted(fold_test[fold_index])
        train = sorted(all_rows.difference(test))
        folds.append(
            DatasetParameters(
                header=CommonHeader.create(authors=authors),
                dataset_id=dataset_id,
                split_method="stratified_kfold",
                train_ratio=1.0 - 1.0 / k,
                n_folds=k,
                fold_index=fold_index,
                seed=seed,
                train_indices=train,
                test_indices=test,
            )
        )
    return folds


def make_holdout_split(
    table: Table,
    train_ratio: float,
    seed: int,
    dataset_id: str = "",
    authors: tuple[str, ...] = ("splitter",),
) -> DatasetParameters:
    """Single shuffled holdout split: the first ceil((1-train_ratio)*n) rows
    of the shuffled sequence become the test set."""
    table.validate()
    if not 0.0 < train_ratio < 1.0:
        raise InvalidInputError("train_ratio must be within (0, 1)")
    n = table.n_rows
    if n < 2:
        raise InvalidInputError("holdout split needs at least 2 rows")
    test, train = _holdout_indices(n, train_ratio, seed)
    return DatasetParameters(
        header=CommonHeader.create(authors=authors),
        dataset_id=dataset_id,
        split_method="holdout",
        train_ratio=train_ratio,
        seed=seed,
        train_indices=train,
        test_indices=test,
    )


def _holdout_indices(n: int, train_ratio: float, seed: int) -> tuple[list[int], list[int]]:
    rng = SplitMix64(seed)
    order = list(range(n))
    rng.shuffle(order)
    n_test = math.ceil((1.0 - train_ratio) * n)
    n_test = min(max(n_test, 1), n - 1)
    return sorted(order[:n_test]), sorted(order[n_test:])


def realize_split(table: Table, params: DatasetParameters) -> SplitIndices:
    """Re-materialise the exact split a stored document describes.

    Explicit index lists are returned verbatim (after a bounds check);
    otherwise the split is recomputed deterministically from the recorded
    method, fold count, fold index, and seed.
    """
    table.validate()
    n = table.n_rows
    if params.train_indices is not None and params.test_indices is not None:
        out = [i for i in params.train_indices + params.test_indices if not 0 <= i < n]
        if out:
            raise IntegrityError(
                f"stored indices {sorted(set(out))[:5]} outside table bounds [0, {n})"
            )
        return SplitIndices(train=list(params.train_indices), test=list(params.test_indices))

    if params.split_method == "stratified_kfold":
        folds = make_stratified_folds(table, params.n_folds, params.seed)
        if not 0 <= params.fold_index < len(folds):
            raise IntegrityError(f"fold_index {params.fold_index} outside [0, {len(folds)})")
        fold = folds[params.fold_index]
        return SplitIndices(train=list(fold.train_indices), test=list(fold.test_indices))
    if params.split_method == "holdout":
        test, train = _holdout_indices(n, params.train_ratio, params.seed)
        return SplitIndices(train=train, test=test)
    raise IntegrityError(
        f"split document {params.header.id or '<unsaved>'} has method "
        f"{params.split_method!r} but no stored indices"
    )
