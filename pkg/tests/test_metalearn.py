import itertools
import math
import random

import numpy as np
import pytest

from expdb import (
    ContractViolationError,
    InvalidInputError,
    InvalidStateError,
    MetaFeatures,
    RecommendationPlan,
    Standardizer,
    build_greedy_portfolio,
    build_results_matrix,
    compare_sources,
    dataset_distance,
    evaluate_regret,
    knd_recommend,
)
from expdb.metalearn import (
    GREEDY,
    KND,
    Portfolio,
    PortfolioPlan,
    ResultsMatrix,
    _spearman,
    expected_scores,
    regret_report_csv,
)
from expdb.metamodel import META_FEATURE_NAMES
from expdb.metrics import FIRST_RUN, MEAN_AGGREGATED

from .helpers import meta_features_vector, record


def mf(**kwargs) -> MetaFeatures:
    base = {name: 1.0 for name in META_FEATURE_NAMES}
    base.update(kwargs)
    return MetaFeatures(**base)


def matrix_from_values(values, floor=0.0, meta=None) -> ResultsMatrix:
    values = np.asarray(values, dtype=float)
    n_rows, n_cols = values.shape
    dataset_ids = [f"d{i}" for i in range(n_rows)]
    config_ids = [("p", f"c{j}") for j in range(n_cols)]
    meta = meta or {d: mf(n_instances=float(10 + i)) for i, d in enumerate(dataset_ids)}
    return ResultsMatrix(
        dataset_ids=dataset_ids,
        config_ids=config_ids,
        values=values,
        meta_features=meta,
        metric_floor=floor,
    )


class TestDatasetDistance:
    def test_identity(self):
        std = Standardizer.fit([mf(n_instances=10.0), mf(n_instances=20.0)])
        a = mf(n_instances=15.0)
        assert dataset_distance(a, a, std) == 0.0

    def test_symmetry(self):
        rng = random.Random(9)
        corpus = [meta_features_vector(rng) for _ in range(6)]
        std = Standardizer.fit(corpus)
        for _ in range(10):
            a, b = rng.choice(corpus), rng.choice(corpus)
            assert dataset_distance(a, b, std) == pytest.approx(
                dataset_distance(b, a, std), abs=1e-12
            )

    def test_hand_worked_three_dataset_corpus(self):
        # two varying features: n_instances (100,200,300) and n_classes
        # (2,4,6); all others constant contribute 0.  Population std of
        # n_instances: sqrt(20000/3) = 81.6497, so each z-step is
        # 100/81.6497 = 1.2247448713915890; same for n_classes.
        a = mf(n_instances=100.0, n_classes=2.0)
        b = mf(n_instances=200.0, n_classes=4.0)
        c = mf(n_instances=300.0, n_classes=6.0)
        std = Standardizer.fit([a, b, c])
        assert dataset_distance(a, b, std) == pytest.approx(2.449489742783178, abs=1e-9)
        assert dataset_distance(a, c, std) == pytest.approx(4.898979485566356, abs=1e-9)
        assert dataset_distance(b, c, std) == pytest.approx(2.449489742783178, abs=1e-9)

    def test_missing_features_impute_to_corpus_mean(self):
        a = mf(n_instances=100.0)
        b = mf(n_instances=300.0)
        std = Standardizer.fit([a, b])
        query = mf(n_instances=None)  # missing -> z 0, the corpus mean
        assert dataset_distance(query, a, std) == pytest.approx(1.0)
        assert dataset_distance(query, b, std) == pytest.approx(1.0)

    def test_triangle_inequality_on_random_triples(self):
        rng = random.Random(31)
        corpus = [meta_features_vector(rng) for _ in range(8)]
        std = Standardizer.fit(corpus)
        for _ in range(30):
            x, y, z = rng.sample(corpus, 3)
            assert dataset_distance(x, z, std) <= (
                dataset_distance(x, y, std) + dataset_distance(y, z, std) + 1e-9
            )

    def test_unfitted_standardizer_rejected(self):
        with pytest.raises(InvalidStateError):
            dataset_distance(mf(), mf(), Standardizer())
        with pytest.raises(InvalidInputError):
            Standardizer.fit([mf()])


class TestKndRecommend:
    def test_zero_distance_nearest_argmax_first(self):
        values = [
            [0.1, 0.9, 0.3],
            [0.8, 0.2, 0.4],
            [0.5, 0.5, 0.5],
        ]
        meta = {
            "d0": mf(n_instances=10.0),
            "d1": mf(n_instances=50.0),
            "d2": mf(n_instances=90.0),
        }
        corpus = matrix_from_values(values, meta=meta)
        plan = knd_recommend(mf(n_instances=50.0), corpus, k=1, budget=3)
        assert plan.next() == ("p", "c0")  # d1's argmax

    def test_identical_rows_full_k_is_global_best_first(self):
        values = [[0.2, 0.9, 0.5, 0.7]] * 4
        corpus = matrix_from_values(values)
        plan = knd_recommend(mf(n_instances=1.0), corpus, k=4, budget=4)
        order = [plan.next() for _ in range(4)]
        assert order == [("p", "c1"), ("p", "c3"), ("p", "c2"), ("p", "c0")]

    def test_planted_nearest_neighbor_oracle(self):
        rng = random.Random(77)
        n_rows, n_cols = 5, 6
        meta = {f"d{i}": meta_features_vector(rng) for i in range(n_rows)}
        values = [[rng.random() for _ in range(n_cols)] for _ in range(n_rows)]
        corpus = matrix_from_values(values, meta=meta)
        query = meta_features_vector(rng)

        # exhaustive oracle: explicit z-score distance over all rows
        feats = list(META_FEATURE_NAMES)
        cols = {
            f: [meta[f"d{i}"].get(f) for i in range(n_rows)] for f in feats
        }
        means = {f: np.mean(cols[f]) for f in feats}
        stds = {f: np.std(cols[f]) for f in feats}

        def z(mfv):
            return np.array(
                [
                    0.0 if stds[f] == 0 else (mfv.get(f) - means[f]) / stds[f]
                    for f in feats
                ]
            )

        distances = [np.abs(z(query) - z(meta[f"d{i}"])).sum() for i in range(n_rows)]
        nearest = int(np.argmin(distances))
        expected_first = corpus.config_ids[int(np.argmax(values[nearest]))]

        plan = knd_recommend(query, corpus, k=1, budget=6)
        assert plan.next() == expected_first

    def test_duplicate_free_and_subset_of_candidates(self):
        rng = random.Random(13)
        values = [[rng.random() for _ in range(7)] for _ in range(5)]
        corpus = matrix_from_values(values)
        plan = knd_recommend(meta_features_vector(rng), corpus, k=3, budget=20)
        proposals = []
        while (c := plan.next()) is not None:
            proposals.append(c)
            plan.observe(c, rng.random())
        assert len(proposals) == len(set(proposals)) == 7
        assert set(proposals) <= set(corpus.config_ids)

    def test_budget_respected(self):
        values = [[0.5] * 6] * 3
        corpus = matrix_from_values(values)
        plan = knd_recommend(mf(), corpus, k=2, budget=4)
        proposals = [plan.next() for _ in range(6)]
        assert proposals[4] is None and proposals[5] is None

    def test_observe_unproposed_is_contract_violation(self):
        corpus = matrix_from_values([[0.5, 0.6]] * 2)
        plan = knd_recommend(mf(), corpus, k=1, budget=2)
        with pytest.raises(ContractViolationError):
            plan.observe(("p", "c1"), 0.5)

    def test_landmarking_switches_neighbors_after_three_observations(self):
        # meta-features point at d0, but the query's true performances match
        # d1; after three observations the Spearman landmark must take over
        values = [
            [0.9, 0.8, 0.7, 0.1, 0.2, 0.3],   # d0: prefers c0,c1,c2
            [0.1, 0.2, 0.3, 0.9, 0.8, 0.7],   # d1: prefers c3,c4,c5
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5],   # d2: uninformative
            [0.5, 0.5, 0.5, 0.5, 0.5, 0.5],   # d3: uninformative
        ]
        meta = {
            "d0": mf(n_instances=10.0),
            "d1": mf(n_instances=500.0),
            "d2": mf(n_instances=900.0),
            "d3": mf(n_instances=1300.0),
        }
        corpus = matrix_from_values(values, meta=meta)
        truth = {("p", f"c{j}"): values[1][j] for j in range(6)}
        plan = knd_recommend(mf(n_instances=10.0), corpus, k=1, budget=6)
        proposals = []
        for _ in range(4):
            c = plan.next()
            proposals.append(c)
            plan.observe(c, truth[c])
        assert proposals[:3] == [("p", "c0"), ("p", "c1"), ("p", "c2")]
        assert proposals[3] == ("p", "c3")  # d1's best after the switch

    def test_expected_scores_are_neighbor_means(self):
        values = [
            [0.2, 0.4],
            [0.6, 0.8],
            [0.0, 0.1],
        ]
        meta = {
            "d0": mf(n_instances=10.0),
            "d1": mf(n_instances=20.0),
            "d2": mf(n_instances=90.0),
        }
        corpus = matrix_from_values(values, meta=meta)
        plan = knd_recommend(mf(n_instances=15.0), corpus, k=2, budget=2)
        proposals = [plan.next(), plan.next()]
        scores = expected_scores(plan, corpus, proposals)
        by_config = dict(zip(proposals, scores))
        assert by_config[("p", "c0")] == pytest.approx(0.4)  # mean(0.2, 0.6)
        assert by_config[("p", "c1")] == pytest.approx(0.6)  # mean(0.4, 0.8)


class TestSpearman:
    def test_perfect_and_inverse(self):
        assert _spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
        assert _spearman([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)

    def test_constant_side_is_zero(self):
        assert _spearman([1, 2, 3], [5, 5, 5]) == 0.0

    def test_matches_scipy(self):
        import scipy.stats

        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.random(10).tolist()
            b = rng.random(10).tolist()
            assert _spearman(a, b) == pytest.approx(
                scipy.stats.spearmanr(a, b).statistic, abs=1e-12
            )


def exhaustive_best_portfolio_gain(values: np.ndarray, s: int, floor: float = 0.0) -> float:
    n_cols = values.shape[1]
    best = 0.0
    base = np.full(values.shape[0], floor)
    for subset in itertools.combinations(range(n_cols), s):
        cols = values[:, subset]
        cols = np.where(np.isnan(cols), floor, cols)
        objective = np.maximum(base, cols.max(axis=1)).sum()
        best = max(best, float(objective))
    return best - float(base.sum())


class TestGreedyPortfolio:
    def test_single_row_picks_argmax(self):
        m = matrix_from_values([[0.1, 0.7, 0.3]])
        portfolio = build_greedy_portfolio(m, s=2)
        assert portfolio.config_ids[0] == ("p", "c1")

    def test_dominated_config_never_added(self):
        values = [
            [0.9, 0.8, 0.0],
            [0.9, 0.8, 0.95],
        ]
        m = matrix_from_values(values)
        portfolio = build_greedy_portfolio(m, s=2)
        assert ("p", "c1") not in portfolio.config_ids
        assert portfolio.config_ids == [("p", "c0"), ("p", "c2")]

    def test_guarantee_against_exhaustive_optimum(self):
        rng = np.random.default_rng(55)
        bound = 1.0 - 1.0 / math.e
        for _ in range(20):
            values = rng.random((8, 10))
            m = matrix_from_values(values.tolist())
            portfolio = build_greedy_portfolio(m, s=3)
            cols = [m.config_ids.index(c) for c in portfolio.config_ids]
            gain = float(np.maximum.reduce([values[:, j] for j in cols]).sum())
            optimum = exhaustive_best_portfolio_gain(values, 3)
            assert gain >= bound * optimum - 1e-9

    def test_single_row_greedy_is_optimal(self):
        rng = np.random.default_rng(7)
        values = rng.random((1, 10))
        m = matrix_from_values(values.tolist())
        portfolio = build_greedy_portfolio(m, s=1)
        gain = float(values[0, m.config_ids.index(portfolio.config_ids[0])])
        assert gain == pytest.approx(exhaustive_best_portfolio_gain(values, 1))

    def test_objective_monotone_in_size(self):
        rng = np.random.default_rng(19)
        values = rng.random((6, 9))
        m = matrix_from_values(values.tolist())
        gains = []
        for s in range(1, 6):
            portfolio = build_greedy_portfolio(m, s=s)
            cols = [m.config_ids.index(c) for c in portfolio.config_ids]
            gains.append(float(np.maximum.reduce([values[:, j] for j in cols]).sum()))
        assert all(b >= a - 1e-12 for a, b in zip(gains, gains[1:]))

    def test_size_capped_at_config_count(self):
        m = matrix_from_values([[0.4, 0.2]])
        portfolio = build_greedy_portfolio(m, s=10)
        assert len(portfolio.config_ids) <= 2

    def test_missing_cells_are_no_gain(self):
        values = [
            [0.5, np.nan],
            [np.nan, 0.4],
        ]
        m = matrix_from_values(values)
        portfolio = build_greedy_portfolio(m, s=2)
        assert set(portfolio.config_ids) == {("p", "c0"), ("p", "c1")}

    def test_ties_break_on_ascending_config_id(self):
        m = matrix_from_values([[0.5, 0.5]])
        portfolio = build_greedy_portfolio(m, s=1)
        assert portfolio.config_ids == [("p", "c0")]


class ScriptedPlan(RecommendationPlan):
    def __init__(self, order):
        self._order = list(order)
        self._proposed = set()

    def next(self):
        if not self._order:
            return None
        c = self._order.pop(0)
        self._proposed.add(c)
        return c

    def observe(self, config_id, value):
        assert config_id in self._proposed


class TestEvaluateRegret:
    def test_definition_trace(self):
        truth = {("p", "c0"): 0.5, ("p", "c1"): 0.9}
        plan = ScriptedPlan([("p", "c0"), ("p", "c1")])
        curve = evaluate_regret(plan, truth, T=4)
        assert curve.values == pytest.approx([0.4, 0.0, 0.0, 0.0])

    def test_oracle_plan_zero_immediately(self):
        truth = {("p", "c0"): 0.3, ("p", "c1"): 0.9}
        plan = ScriptedPlan([("p", "c1")])
        curve = evaluate_regret(plan, truth, T=2)
        assert curve.values[0] == 0.0

    def test_hand_simulated_portfolio_trace(self):
        # manual simulation: portfolio [c2, c0, c1], truth below; padding
        # repeats the final value once candidates run out
        values = [[0.5, 0.5, 0.2]]
        m = matrix_from_values(values)
        truth = {("p", "c0"): 0.9, ("p", "c1"): 0.5, ("p", "c2"): 0.5}
        portfolio = Portfolio(config_ids=[("p", "c2"), ("p", "c0"), ("p", "c1")], size=3)
        plan = PortfolioPlan(portfolio, m, budget=3)
        curve = evaluate_regret(plan, truth, T=5)
        assert curve.values == pytest.approx([0.4, 0.0, 0.0, 0.0, 0.0])

    def test_missing_truth_observed_at_floor(self):
        truth = {("p", "c1"): 0.8}
        plan = ScriptedPlan([("p", "c0"), ("p", "c1")])  # c0 missing from truth
        curve = evaluate_regret(plan, truth, T=2)
        assert curve.values == pytest.approx([0.8, 0.0])

    def test_invariants_on_random_plans(self):
        rng = random.Random(3)
        for _ in range(50):
            n_cols = rng.randint(1, 8)
            configs = [("p", f"c{j}") for j in range(n_cols)]
            truth = {c: rng.random() for c in configs if rng.random() < 0.8}
            if not truth:
                truth = {configs[0]: rng.random()}
            order = configs[:]
            rng.shuffle(order)
            T = rng.randint(1, 12)
            curve = evaluate_regret(ScriptedPlan(order), truth, T=T)
            assert all(r >= 0.0 for r in curve.values)
            assert all(b <= a + 1e-12 for a, b in zip(curve.values, curve.values[1:]))
            if T >= n_cols:
                assert curve.values[-1] == pytest.approx(0.0)


class TestCompareSources:
    @staticmethod
    def corpus_records(rng, n_datasets=6, n_configs=8, repeats=3, noise=0.0):
        records = []
        for d in range(n_datasets):
            for j in range(n_configs):
                base = rng.random()
                for fold in range(1):
                    for r in range(repeats):
                        v = base + (rng.gauss(0, noise) if noise else 0.0)
                        records.append(
                            record(f"d{d}", "p", f"c{j}", fold, r, max(0.0, min(1.0, v)))
                        )
        return records

    def test_identical_runs_make_sources_coincide(self):
        rng = random.Random(8)
        records = self.corpus_records(rng, noise=0.0)
        meta = {f"d{i}": meta_features_vector(rng) for i in range(6)}
        for rec in (KND, GREEDY):
            cmp = compare_sources(records, meta, recommender=rec, T=5, k=2)
            for curves in cmp.per_dataset.values():
                assert curves[FIRST_RUN].values == pytest.approx(
                    curves[MEAN_AGGREGATED].values
                )

    def test_exhaustion_reaches_zero_regret(self):
        rng = random.Random(9)
        records = self.corpus_records(rng, n_configs=6, noise=0.05)
        meta = {f"d{i}": meta_features_vector(rng) for i in range(6)}
        for rec in (KND, GREEDY):
            cmp = compare_sources(records, meta, recommender=rec, T=6, k=2)
            for curves in cmp.per_dataset.values():
                for curve in curves.values():
                    assert curve.values[-1] == pytest.approx(0.0)

    def test_mean_curves_average_per_dataset(self):
        rng = random.Random(10)
        records = self.corpus_records(rng, noise=0.02)
        meta = {f"d{i}": meta_features_vector(rng) for i in range(6)}
        cmp = compare_sources(records, meta, recommender=GREEDY, T=4, k=2)
        stacked = np.array([c[FIRST_RUN].values for c in cmp.per_dataset.values()])
        assert cmp.mean_curves[FIRST_RUN] == pytest.approx(stacked.mean(axis=0).tolist())

    def test_csv_report_shape(self):
        rng = random.Random(11)
        records = self.corpus_records(rng, n_datasets=3, n_configs=4)
        meta = {f"d{i}": meta_features_vector(rng) for i in range(3)}
        cmp = compare_sources(records, meta, recommender=GREEDY, T=2, k=2)
        lines = regret_report_csv(cmp).splitlines()
        assert lines[0] == "dataset_id,source,iteration,regret"
        assert len(lines) == 1 + 3 * 2 * 2  # datasets x sources x iterations
