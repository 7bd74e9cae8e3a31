"""Dataset similarity, the k-nearest-dataset recommender, greedy portfolio
construction, and the regret-evaluation harness.

The kND recommender starts from meta-feature distance (L1 over z-scored
features), proposes the neighbours' best configurations round-robin, and
once three observations are available switches to landmarking: neighbours
are re-scored by 1 - Spearman correlation between the query dataset's
observed configuration performances and each corpus row's values on those
configurations.  The greedy portfolio maximises the summed best-so-far
performance over training datasets, a monotone submodular objective, so the
classic (1 - 1/e) guarantee applies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, InvalidInputError, InvalidStateError
from .metamodel import META_FEATURE_NAMES, MetaFeatures
from .metrics import FIRST_RUN, MEAN_AGGREGATED, RESULT_SOURCES, ResultRecord
from .stats import average_ranks

ConfigId = tuple[str, str]  # (pipeline_id, pipeline_params_id)

KND = "knd"
GREEDY = "greedy"
RECOMMENDERS = (KND, GREEDY)

LANDMARK_MIN_OBSERVATIONS = 3
DEFAULT_ITERATIONS = 25


# ---------------------------------------------------------------------------
# Meta-feature distance
# ---------------------------------------------------------------------------


@dataclass
class Standardizer:
    """Per-feature corpus mean/std over the fixed meta-feature vector."""

    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    fitted: bool = False

    @classmethod
    def fit(cls, corpus: list[MetaFeatures]) -> "Standardizer":
        if len(corpus) < 2:
            raise InvalidInputError("standardizer needs at least 2 corpus datasets")
        means, stds = {}, {}
        for name in META_FEATURE_NAMES:
            values = [mf.get(name) for mf in corpus]
            values = [v for v in values if v is not None]
            if not values:
                means[name], stds[name] = 0.0, 0.0
                continue
            m = math.fsum(values) / len(values)
            var = math.fsum((v - m) ** 2 for v in values) / len(values)
            means[name], stds[name] = m, math.sqrt(var)
        return cls(means=means, stds=stds, fitted=True)

    def zscores(self, mf: MetaFeatures) -> list[float]:
        """Missing features and zero-variance features map to 0."""
        if not self.fitted:
            raise InvalidStateError("standardizer has not been fitted")
        out = []
        for name in META_FEATURE_NAMES:
            v = mf.get(name)
            s = self.stds[name]
            if v is None or s == 0.0:
                out.append(0.0)
            else:
                out.append((v - self.means[name]) / s)
        return out


def dataset_distance(a: MetaFeatures, b: MetaFeatures, standardizer: Standardizer) -> float:
    """L1 distance between z-scored fixed meta-feature vectors."""
    za, zb = standardizer.zscores(a), standardizer.zscores(b)
    return math.fsum(abs(x - y) for x, y in zip(za, zb))


# ---------------------------------------------------------------------------
# Results matrix
# ---------------------------------------------------------------------------


@dataclass
class ResultsMatrix:
    """Datasets x configurations performance matrix (NaN = missing) with the
    per-row meta-features needed for similarity."""

    dataset_ids: list[str]
    config_ids: list[ConfigId]
    values: np.ndarray
    meta_features: dict[str, MetaFeatures]
    metric_floor: float = 0.0

    @property
    def n_datasets(self) -> int:
        return len(self.dataset_ids)

    @property
    def n_configs(self) -> int:
        return len(self.config_ids)

    def row(self, dataset_id: str) -> np.ndarray:
        return self.values[self.dataset_ids.index(dataset_id)]

    def truth_row(self, dataset_id: str) -> dict[ConfigId, float]:
        row = self.row(dataset_id)
        return {
            c: float(v) for c, v in zip(self.config_ids, row) if not math.isnan(v)
        }

    def without(self, dataset_id: str) -> "ResultsMatrix":
        keep = [i for i, d in enumerate(self.dataset_ids) if d != dataset_id]
        return ResultsMatrix(
            dataset_ids=[self.dataset_ids[i] for i in keep],
            config_ids=list(self.config_ids),
            values=self.values[keep],
            meta_features={d: self.meta_features[d] for d in self.meta_features if d != dataset_id},
            metric_floor=self.metric_floor,
        )


def build_results_matrix(
    records: list[ResultRecord],
    source: str,
    meta_features: dict[str, MetaFeatures],
    metric_floor: float = 0.0,
) -> ResultsMatrix:
    """Collapse per-run records to one cell per (dataset, configuration)
    according to the result source."""
    if source not in RESULT_SOURCES:
        raise InvalidInputError(f"unknown result source {source!r}")
    dataset_ids = sorted({r.dataset_id for r in records})
    config_ids = sorted({r.config_id for r in records})
    row_of = {d: i for i, d in enumerate(dataset_ids)}
    col_of = {c: i for i, c in enumerate(config_ids)}
    groups: dict[tuple[int, int], list[ResultRecord]] = {}
    for r in records:
        groups.setdefault((row_of[r.dataset_id], col_of[r.config_id]), []).append(r)
    values = np.full((len(dataset_ids), len(config_ids)), np.nan)
    for (i, j), recs in groups.items():
        if source == FIRST_RUN:
            values[i, j] = min(recs, key=lambda r: r.order_key).value
        else:
            values[i, j] = math.fsum(r.value for r in recs) / len(recs)
    return ResultsMatrix(
        dataset_ids=dataset_ids,
        config_ids=config_ids,
        values=values,
        meta_features={d: meta_features[d] for d in dataset_ids},
        metric_floor=metric_floor,
    )


# ---------------------------------------------------------------------------
# Recommendation plans
# ---------------------------------------------------------------------------


class RecommendationPlan:
    """Stateful proposer over a candidate configuration set.  ``next()``
    yields the next configuration to try (None once the budget or the
    candidates are exhausted); ``observe()`` feeds back the measured value.
    A configuration is never proposed twice."""

    def next(self) -> ConfigId | None:
        raise NotImplementedError

    def observe(self, config_id: ConfigId, value: float) -> None:
        raise NotImplementedError


def _mean_order(matrix: ResultsMatrix) -> list[ConfigId]:
    """Configs by corpus-wide mean performance (descending, id tiebreak);
    the fallback proposal order once targeted suggestions run out."""
    with np.errstate(invalid="ignore"):
        col_means = np.nanmean(matrix.values, axis=0)
    col_means = np.where(np.isnan(col_means), -np.inf, col_means)
    scored = sorted(zip(matrix.config_ids, col_means), key=lambda e: (-e[1], e[0]))
    return [c for c, _ in scored]


class KndPlan(RecommendationPlan):
    def __init__(
        self,
        query: MetaFeatures,
        corpus: ResultsMatrix,
        k: int,
        budget: int,
    ):
        if k < 1:
            raise InvalidInputError("k must be >= 1")
        if corpus.n_datasets < k:
            raise InvalidInputError(f"corpus has {corpus.n_datasets} rows, fewer than k={k}")
        if budget < 1:
            raise InvalidInputError("budget must be >= 1")
        self._corpus = corpus
        self._k = k
        self._budget = budget
        self._proposed: list[ConfigId] = []
        self._proposed_set: set[ConfigId] = set()
        self._observed: dict[ConfigId, float] = {}
        self._fallback = _mean_order(corpus)

        standardizer = Standardizer.fit(list(corpus.meta_features.values()))
        query_z = np.array(standardizer.zscores(query))
        distances = []
        for dataset_id in corpus.dataset_ids:
            row_z = np.array(standardizer.zscores(corpus.meta_features[dataset_id]))
            distances.append(float(np.abs(query_z - row_z).sum()))
        self._neighbors = self._nearest(distances)
        self._queue = self._build_queue()

    def _nearest(self, distances: list[float]) -> list[int]:
        order = sorted(
            range(self._corpus.n_datasets),
            key=lambda i: (distances[i], self._corpus.dataset_ids[i]),
        )
        return order[: self._k]

    def _preferences(self, row_index: int) -> list[ConfigId]:
        row = self._corpus.values[row_index]
        scored = [
            (c, float(v))
            for c, v in zip(self._corpus.config_ids, row)
            if not math.isnan(v)
        ]
        scored.sort(key=lambda e: (-e[1], e[0]))
        return [c for c, _ in scored]

    def _build_queue(self) -> list[ConfigId]:
        """Round-robin over the current neighbours, each contributing its
        best not-yet-taken configuration per cycle, then the corpus-mean
        fallback order."""
        taken = set(self._proposed_set)
        queue: list[ConfigId] = []
        prefs = [self._preferences(i) for i in self._neighbors]
        cursors = [0] * len(prefs)
        progressed = True
        while progressed:
            progressed = False
            for ni, pref in enumerate(prefs):
                while cursors[ni] < len(pref) and pref[cursors[ni]] in taken:
                    cursors[ni] += 1
                if cursors[ni] < len(pref):
                    config = pref[cursors[ni]]
                    queue.append(config)
                    taken.add(config)
                    cursors[ni] += 1
                    progressed = True
        for config in self._fallback:
            if config not in taken:
                queue.append(config)
                taken.add(config)
        return queue

    @property
    def neighbor_dataset_ids(self) -> list[str]:
        return [self._corpus.dataset_ids[i] for i in self._neighbors]

    @property
    def neighbor_indices(self) -> list[int]:
        return list(self._neighbors)

    def next(self) -> ConfigId | None:
        if len(self._proposed) >= self._budget or not self._queue:
            return None
        config = self._queue.pop(0)
        self._proposed.append(config)
        self._proposed_set.add(config)
        return config

    def observe(self, config_id: ConfigId, value: float) -> None:
        if config_id not in self._proposed_set:
            raise ContractViolationError(
                f"configuration {config_id!r} was never proposed by this plan"
            )
        self._observed[config_id] = float(value)
        if len(self._observed) >= LANDMARK_MIN_OBSERVATIONS:
            self._relandmark()

    def _relandmark(self) -> None:
        """Replace meta-feature distance by 1 - Spearman correlation between
        the query's observed performances and each corpus row's values on
        the same configurations, then rebuild the remaining proposals."""
        observed_configs = sorted(self._observed)
        query_values = [self._observed[c] for c in observed_configs]
        cols = [self._corpus.config_ids.index(c) for c in observed_configs]
        distances = []
        for i in range(self._corpus.n_datasets):
            row = self._corpus.values[i, cols]
            mask = ~np.isnan(row)
            if mask.sum() < 2:
                distances.append(1.0)  # neutral: correlation treated as 0
                continue
            q = [v for v, ok in zip(query_values, mask) if ok]
            r = [float(v) for v, ok in zip(row, mask) if ok]
            rho = _spearman(q, r)
            distances.append(1.0 - rho)
        self._neighbors = self._nearest(distances)
        self._queue = self._build_queue()


def _spearman(a: list[float], b: list[float]) -> float:
    """Spearman rank correlation; 0 when either side is constant."""
    ra, rb = average_ranks(a), average_ranks(b)
    ma = sum(ra) / len(ra)
    mb = sum(rb) / len(rb)
    va = math.fsum((x - ma) ** 2 for x in ra)
    vb = math.fsum((x - mb) ** 2 for x in rb)
    if va == 0.0 or vb == 0.0:
        return 0.0
    cov = math.fsum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    return cov / math.sqrt(va * vb)


def knd_recommend(
    query: MetaFeatures, corpus: ResultsMatrix, k: int, budget: int
) -> KndPlan:
    """k-nearest-dataset recommendation plan over the corpus configurations."""
    return KndPlan(query, corpus, k, budget)


def expected_scores(
    plan: KndPlan, corpus: ResultsMatrix, proposals: list[ConfigId]
) -> list[float]:
    """Neighbour-mean expected score per proposal; falls back to the corpus
    column mean, then the metric floor, when the neighbours lack the cell."""
    col_of = {c: j for j, c in enumerate(corpus.config_ids)}
    rows = plan.neighbor_indices
    scores = []
    for config in proposals:
        j = col_of[config]
        neighbor_vals = [
            float(corpus.values[i, j]) for i in rows if not math.isnan(corpus.values[i, j])
        ]
        if neighbor_vals:
            scores.append(math.fsum(neighbor_vals) / len(neighbor_vals))
            continue
        col = corpus.values[:, j]
        col_vals = [float(v) for v in col if not math.isnan(v)]
        scores.append(
            math.fsum(col_vals) / len(col_vals) if col_vals else float(corpus.metric_floor)
        )
    return scores


# ---------------------------------------------------------------------------
# Greedy portfolio
# ---------------------------------------------------------------------------


@dataclass
class Portfolio:
    """Ordered, duplicate-free configuration set of at most ``size``."""

    config_ids: list[ConfigId]
    size: int


def build_greedy_portfolio(train: ResultsMatrix, s: int) -> Portfolio:
    """Greedily append the configuration maximising the summed best-so-far
    performance over training rows; missing cells contribute the row's
    running best (no gain).  Stops early once nothing improves the
    objective (but always picks at least one configuration)."""
    if s < 1:
        raise InvalidInputError("portfolio size must be >= 1")
    if train.n_datasets == 0 or train.n_configs == 0:
        raise InvalidInputError("training matrix must be non-empty")
    s = min(s, train.n_configs)
    best = np.full(train.n_datasets, float(train.metric_floor))
    chosen: list[ConfigId] = []
    chosen_idx: set[int] = set()
    current = float(best.sum())
    for _ in range(s):
        best_gain, best_col = None, None
        for j, config in enumerate(train.config_ids):
            if j in chosen_idx:
                continue
            col = train.values[:, j]
            candidate = np.where(np.isnan(col), best, np.maximum(best, col))
            objective = float(candidate.sum())
            key = (-(objective - current), config)
            if best_gain is None or key < best_gain:
                best_gain, best_col = key, j
        gain = -best_gain[0]
        if gain <= 1e-12 and chosen:
            break
        col = train.values[:, best_col]
        best = np.where(np.isnan(col), best, np.maximum(best, col))
        current = float(best.sum())
        chosen.append(train.config_ids[best_col])
        chosen_idx.add(best_col)
    return Portfolio(config_ids=chosen, size=s)


class PortfolioPlan(RecommendationPlan):
    """Proposes the portfolio order, then falls back to the corpus-mean
    order; observations are accepted (and validated) but unused."""

    def __init__(self, portfolio: Portfolio, corpus: ResultsMatrix, budget: int):
        if budget < 1:
            raise InvalidInputError("budget must be >= 1")
        self._budget = budget
        self._proposed: list[ConfigId] = []
        self._proposed_set: set[ConfigId] = set()
        seen = set(portfolio.config_ids)
        self._queue = list(portfolio.config_ids) + [
            c for c in _mean_order(corpus) if c not in seen
        ]

    def next(self) -> ConfigId | None:
        if len(self._proposed) >= self._budget or not self._queue:
            return None
        config = self._queue.pop(0)
        self._proposed.append(config)
        self._proposed_set.add(config)
        return config

    def observe(self, config_id: ConfigId, value: float) -> None:
        if config_id not in self._proposed_set:
            raise ContractViolationError(
                f"configuration {config_id!r} was never proposed by this plan"
            )


# ---------------------------------------------------------------------------
# Regret evaluation
# ---------------------------------------------------------------------------


@dataclass
class RegretCurve:
    """Per-iteration regret r_1..r_T: best achievable value minus the best
    value observed so far.  Non-increasing and non-negative by construction."""

    values: list[float]

    @property
    def final(self) -> float:
        return self.values[-1]


def evaluate_regret(
    plan: RecommendationPlan,
    truth: dict[ConfigId, float],
    T: int,
    metric_floor: float = 0.0,
) -> RegretCurve:
    """Drive a plan against the held-out dataset's true performances.

    Missing configurations are observed at the metric floor, mirroring
    failed runs; if the plan exhausts its candidates early the curve is
    padded with its final value.
    """
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    if not truth:
        raise InvalidInputError("truth row needs at least one known value")
    best_possible = max(truth.values())
    best_seen = float(metric_floor)
    curve = []
    for _ in range(T):
        config = plan.next()
        if config is not None:
            observed = truth.get(config, float(metric_floor))
            plan.observe(config, observed)
            best_seen = max(best_seen, observed)
        curve.append(max(0.0, best_possible - best_seen))
    return RegretCurve(curve)


# ---------------------------------------------------------------------------
# First-run versus mean-aggregated comparison
# ---------------------------------------------------------------------------


@dataclass
class SourceComparison:
    """Leave-one-dataset-out regret curves under both result sources."""

    recommender: str
    iterations: int
    per_dataset: dict[str, dict[str, RegretCurve]]
    mean_curves: dict[str, list[float]]
    excluded: list[tuple[str, str]] = field(default_factory=list)


def compare_sources(
    records: list[ResultRecord],
    meta_features: dict[str, MetaFeatures],
    recommender: str = KND,
    T: int = DEFAULT_ITERATIONS,
    k: int = 5,
    metric_floor: float = 0.0,
) -> SourceComparison:
    """For each held-out dataset, build the recommender from the remaining
    rows (training cells and the evaluation truth row both collapsed with
    the same result source) and record the regret trace under first-run and
    mean-aggregated results."""
    if recommender not in RECOMMENDERS:
        raise InvalidInputError(f"unknown recommender {recommender!r}")
    dataset_ids = sorted({r.dataset_id for r in records})
    if len(dataset_ids) < 2:
        raise InvalidInputError("source comparison needs at least 2 datasets")

    per_dataset: dict[str, dict[str, RegretCurve]] = {}
    excluded: list[tuple[str, str]] = []
    sums = {src: np.zeros(T) for src in RESULT_SOURCES}
    counts = {src: 0 for src in RESULT_SOURCES}

    matrices = {
        src: build_results_matrix(records, src, meta_features, metric_floor)
        for src in RESULT_SOURCES
    }
    for dataset_id in dataset_ids:
        curves: dict[str, RegretCurve] = {}
        for src in RESULT_SOURCES:
            matrix = matrices[src]
            truth = matrix.truth_row(dataset_id)
            if not truth:
                excluded.append((dataset_id, "no usable configurations"))
                curves = {}
                break
            train = matrix.without(dataset_id)
            if recommender == KND:
                plan: RecommendationPlan = knd_recommend(
                    meta_features[dataset_id], train, k=min(k, train.n_datasets), budget=T
                )
            else:
                portfolio = build_greedy_portfolio(train, s=T)
                plan = PortfolioPlan(portfolio, train, budget=T)
            curves[src] = evaluate_regret(plan, truth, T, metric_floor)
        if curves:
            per_dataset[dataset_id] = curves
            for src, curve in curves.items():
                sums[src] += np.array(curve.values)
                counts[src] += 1

    mean_curves = {
        src: list(sums[src] / counts[src]) if counts[src] else []
        for src in RESULT_SOURCES
    }
    return SourceComparison(
        recommender=recommender,
        iterations=T,
        per_dataset=per_dataset,
        mean_curves=mean_curves,
        excluded=excluded,
    )


def regret_report_csv(comparison: SourceComparison) -> str:
    """Long-format CSV: dataset_id, source, iteration, regret."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["dataset_id", "source", "iteration", "regret"])
    for dataset_id in sorted(comparison.per_dataset):
        for src, curve in comparison.per_dataset[dataset_id].items():
            for i, r in enumerate(curve.values, start=1):
                writer.writerow([dataset_id, src, i, repr(r)])
    return buf.getvalue()
