"""Nonparametric ranking statistics and the variability-report procedure.

Implements the Friedman test (chi-square form over within-block average
ranks) and the Wilcoxon signed-rank test (exact sign-assignment distribution
up to 25 effective pairs, tie-corrected normal approximation beyond), plus
the machinery that summarises, per dataset, whether rankings of pipelines or
parameter configurations differ significantly across split configurations,
repeated trials, or against an external results corpus.

The chi-square upper tail comes from the regularized upper incomplete gamma
function (power series for x < a+1, modified-Lentz continued fraction
otherwise) and the normal tail from the complementary error function, both
implemented here so the statistical core carries no heavyweight dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InvalidInputError
from .metrics import (
    FIRST_RUN,
    MEAN_AGGREGATED,
    PARAM_LEVEL,
    PIPELINE_LEVEL,
    ResultRecord,
)

FRIEDMAN = "friedman"
WILCOXON_EXACT = "wilcoxon_exact"
WILCOXON_NORMAL = "wilcoxon_normal"

DATASET_CONFIGS = "dataset_configs"
REPEATED_TRIALS = "repeated_trials"
CROSS_CORPUS = "cross_corpus"
VARIABILITY_MODES = (DATASET_CONFIGS, REPEATED_TRIALS, CROSS_CORPUS)

DEFAULT_TOP_NS = (10, 20, 50, 100)

_EXACT_WILCOXON_LIMIT = 25
_EPS = 3.0e-16
_TINY = 1.0e-300


# ---------------------------------------------------------------------------
# Tail probabilities
# ---------------------------------------------------------------------------


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series; converges
    fast for x < a + 1."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(10_000):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _upper_gamma_contfrac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction
    (modified Lentz); converges fast for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a), the upper regularized incomplete
    gamma function."""
    if a <= 0.0:
        raise InvalidInputError("shape parameter must be positive")
    if x < 0.0:
        raise InvalidInputError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return min(max(1.0 - _lower_gamma_series(a, x), 0.0), 1.0)
    return min(max(_upper_gamma_contfrac(a, x), 0.0), 1.0)


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail of the chi-square distribution with ``dof`` degrees of
    freedom: Q(dof/2, x/2)."""
    if dof < 1:
        raise InvalidInputError("dof must be >= 1")
    if x <= 0.0:
        return 1.0
    return regularized_gamma_q(dof / 2.0, x / 2.0)


def normal_sf(z: float) -> float:
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n with tied values sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for pos in range(i, j + 1):
            ranks[order[pos]] = avg
        i = j + 1
    return ranks


# ---------------------------------------------------------------------------
# Tests
# ---------------------------------------------------------------------------


@dataclass
class TestResult:
    statistic: float
    p_value: float
    method: str
    dof: int | None = None
    degenerate: bool = False


def friedman_test(values: Sequence[Sequence[float]]) -> TestResult:
    """Friedman chi-square test on an n-block x k-treatment value matrix.

    Within each block treatments are ranked (average ranks on ties); the
    statistic is 12n/(k(k+1)) * sum_j (Rbar_j - (k+1)/2)^2 and the p-value
    is the chi-square upper tail with k-1 degrees of freedom.  Constant
    blocks are fine (all treatments share the average rank).
    """
    n = len(values)
    if n < 2:
        raise InvalidInputError("friedman test needs at least 2 blocks")
    k = len(values[0])
    if k < 2:
        raise InvalidInputError("friedman test needs at least 2 treatments")
    rank_sums = [0.0] * k
    for block in values:
        if len(block) != k:
            raise InvalidInputError("all blocks must have the same number of treatments")
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in block):
            raise InvalidInputError("friedman test does not accept missing cells")
        for j, r in enumerate(average_ranks(block)):
            rank_sums[j] += r
    center = (k + 1) / 2.0
    statistic = 12.0 * n / (k * (k + 1)) * sum((rs / n - center) ** 2 for rs in rank_sums)
    return TestResult(
        statistic=statistic,
        p_value=chi2_sf(statistic, k - 1),
        method=FRIEDMAN,
        dof=k - 1,
    )


def _wilcoxon_exact_p(doubled_ranks: list[int], doubled_w: int) -> float:
    """Exact two-sided p over all 2^n sign assignments: the distribution of
    W+ is built by convolution over the (doubled, hence integral) ranks, and
    the lower tail at the observed min(W+, W-) is doubled.  Equivalent to
    full enumeration, which stays feasible only for tiny n."""
    total = sum(doubled_ranks)
    counts = [0.0] * (total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        nxt = counts.copy()
        for s in range(total - r + 1):
            if counts[s]:
                nxt[s + r] += counts[s]
        counts = nxt
    n_patterns = 2.0 ** len(doubled_ranks)
    lower = sum(counts[: doubled_w + 1])
    return min(1.0, 2.0 * lower / n_patterns)


def wilcoxon_signed_rank(pairs: Sequence[tuple[float, float]]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped (Wilcoxon's original treatment); the
    statistic is W = min(W+, W-).  Up to 25 effective pairs the p-value is
    exact over all sign assignments; beyond that a normal approximation with
    tie-corrected variance and continuity correction is used.  All-zero
    differences yield a degenerate result (statistic 0, p = 1).
    """
    if not pairs:
        raise InvalidInputError("wilcoxon test needs at least one pair")
    diffs = [float(a) - float(b) for a, b in pairs]
    diffs = [d for d in diffs if d != 0.0]
    n = len(diffs)
    if n == 0:
        return TestResult(0.0, 1.0, WILCOXON_EXACT, degenerate=True)

    ranks = average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)

    if n <= _EXACT_WILCOXON_LIMIT:
        doubled = [round(2 * r) for r in ranks]
        p = _wilcoxon_exact_p(doubled, round(2 * w))
        return TestResult(w, p, WILCOXON_EXACT)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    tie_counts: dict[float, int] = {}
    for d in diffs:
        tie_counts[abs(d)] = tie_counts.get(abs(d), 0) + 1
    var -= sum(t**3 - t for t in tie_counts.values()) / 48.0
    if var <= 0.0:
        return TestResult(w, 1.0, WILCOXON_NORMAL, degenerate=True)
    z = (w - mean + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * (1.0 - normal_sf(z)))
    return TestResult(w, p, WILCOXON_NORMAL)


# ---------------------------------------------------------------------------
# Variability report
# ---------------------------------------------------------------------------

COMPARISON_ROWS = (
    "dataset_configs_pipeline",
    "dataset_configs_param",
    "repeated_trial_pipeline",
    "repeated_trial_param",
    "original_vs_reproduced",
)


@dataclass
class SignificanceSummary:
    """Fraction of datasets whose rankings differ significantly, per
    comparison row and top-N column; None marks cells no dataset could
    populate (e.g. top-50 pipelines when fewer exist)."""

    metric_name: str
    alpha: float
    top_ns: tuple[int, ...]
    cells: dict[str, dict[int, float | None]]
    dataset_counts: dict[str, dict[int, int]]
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["rankings_tested," + ",".join(f"top_{n}" for n in self.top_ns)]
        for row, by_n in self.cells.items():
            rendered = []
            for n in self.top_ns:
                v = by_n.get(n)
                rendered.append("na" if v is None else f"{v:.4f}")
            lines.append(row + "," + ",".join(rendered))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "alpha": self.alpha,
            "top_ns": list(self.top_ns),
            "cells": {r: {str(n): v for n, v in by_n.items()} for r, by_n in self.cells.items()},
            "dataset_counts": {
                r: {str(n): v for n, v in by_n.items()} for r, by_n in self.dataset_counts.items()
            },
            "excluded": [{"dataset_id": d, "reason": r} for d, r in self.excluded],
        }


def _cell_matrix(
    records: list[ResultRecord], mode: str, level: str, source: str
) -> tuple[list[str], dict[str, dict[int, float]]] | None:
    """Per-entity values under each treatment for one dataset.

    Treatments are the split configurations (dataset_configs mode) or the
    repeat indices on the first configuration (repeated_trials mode).
    Returns (treatments-implied entity table) as {entity: {treatment_pos:
    value}} plus the treatment count, or None when the dataset lacks the
    runs the mode requires.
    """
    if mode == DATASET_CONFIGS:
        treatments = sorted({r.dataset_params_id for r in records})
        scoped = records
        treatment_of = {t: i for i, t in enumerate(treatments)}
        key = lambda r: treatment_of[r.dataset_params_id]  # noqa: E731
    else:  # REPEATED_TRIALS
        if not records:
            return None
        first_config = min(
            {r.dataset_params_id: r.fold_index for r in records}.items(),
            key=lambda kv: (kv[1], kv[0]),
        )[0]
        scoped = [r for r in records if r.dataset_params_id == first_config]
        treatments = sorted({r.repeat_index for r in scoped})
        treatment_of = {t: i for i, t in enumerate(treatments)}
        key = lambda r: treatment_of[r.repeat_index]  # noqa: E731
    if len(treatments) < 2:
        return None

    per_cell: dict[tuple[str, int], list[ResultRecord]] = {}
    for r in scoped:
        entity = r.pipeline_params_id if level == PARAM_LEVEL else r.pipeline_id
        per_cell.setdefault((entity, key(r)), []).append(r)
    table: dict[str, dict[int, float]] = {}
    for (entity, t), recs in per_cell.items():
        if source == FIRST_RUN:
            value = min(recs, key=lambda r: r.order_key).value
        else:
            value = math.fsum(r.value for r in recs) / len(recs)
        table.setdefault(entity, {})[t] = value
    # keep only entities observed under every treatment
    complete = {e: by_t for e, by_t in table.items() if len(by_t) == len(treatments)}
    if not complete:
        return None
    return [str(i) for i in range(len(treatments))], complete


def _top_entities(by_entity: dict[str, dict[int, float]], n: int) -> list[str]:
    pooled = {
        e: math.fsum(v.values()) / len(v) for e, v in by_entity.items()
    }
    ranked = sorted(pooled.items(), key=lambda kv: (-kv[1], kv[0]))
    return [e for e, _ in ranked[:n]]


def variability_report(
    records: list[ResultRecord],
    dataset_ids: Sequence[str],
    metric_name: str,
    alpha: float = 0.05,
    top_ns: Sequence[int] = DEFAULT_TOP_NS,
    mode: str = DATASET_CONFIGS,
    external: dict[str, dict[str, float]] | None = None,
    source: str = MEAN_AGGREGATED,
) -> SignificanceSummary:
    """Reproduce the significance-summary methodology over stored results.

    For each dataset a reference top-N entity list is formed from pooled
    mean scores; the N x T matrix of per-entity values under each treatment
    feeds the Friedman test (split configurations or repeated trials), or
    the shared top-N internal-versus-external score pairs feed the Wilcoxon
    test (cross-corpus mode).  Each summary cell is the fraction of usable
    datasets with p below alpha; datasets lacking the runs a mode requires
    are excluded and reported, never fatal.
    """
    if mode not in VARIABILITY_MODES:
        raise InvalidInputError(f"unknown variability mode {mode!r}")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must be within (0, 1)")
    if mode == CROSS_CORPUS and external is None:
        raise InvalidInputError("cross_corpus mode needs an external results table")

    top_ns = tuple(top_ns)
    by_dataset: dict[str, list[ResultRecord]] = {d: [] for d in dataset_ids}
    for r in records:
        if r.dataset_id in by_dataset:
            by_dataset[r.dataset_id].append(r)

    if mode == CROSS_CORPUS:
        rows = ["original_vs_reproduced"]
        levels = {"original_vs_reproduced": PARAM_LEVEL}
    else:
        prefix = "dataset_configs" if mode == DATASET_CONFIGS else "repeated_trial"
        rows = [f"{prefix}_pipeline", f"{prefix}_param"]
        levels = {f"{prefix}_pipeline": PIPELINE_LEVEL, f"{prefix}_param": PARAM_LEVEL}

    significant = {row: {n: 0 for n in top_ns} for row in rows}
    counted = {row: {n: 0 for n in top_ns} for row in rows}
    excluded: list[tuple[str, str]] = []

    for dataset_id in dataset_ids:
        recs = by_dataset.get(dataset_id, [])
        if not recs:
            excluded.append((dataset_id, "no runs"))
            continue
        usable_somewhere = False
        for row in rows:
            level = levels[row]
            if mode == CROSS_CORPUS:
                internal = {
                    e: v
                    for e, v in _pooled_scores(recs, level).items()
                }
                ext = external.get(dataset_id, {})
                shared = sorted(set(internal) & set(ext))
                if not shared:
                    continue
                usable_somewhere = True
                pooled = {e: (internal[e] + ext[e]) / 2.0 for e in shared}
                ranked = sorted(pooled.items(), key=lambda kv: (-kv[1], kv[0]))
                for n in top_ns:
                    if len(shared) < n:
                        continue
                    top = [e for e, _ in ranked[:n]]
                    result = wilcoxon_signed_rank([(internal[e], ext[e]) for e in top])
                    counted[row][n] += 1
                    if result.p_value < alpha:
                        significant[row][n] += 1
            else:
                built = _cell_matrix(recs, mode, level, source)
                if built is None:
                    continue
                usable_somewhere = True
                treatments, by_entity = built
                for n in top_ns:
                    if len(by_entity) < n:
                        continue
                    top = _top_entities(by_entity, n)
                    matrix = [
                        [by_entity[e][t] for t in range(len(treatments))] for e in top
                    ]
                    result = friedman_test(matrix)
                    counted[row][n] += 1
                    if result.p_value < alpha:
                        significant[row][n] += 1
        if not usable_somewhere:
            excluded.append((dataset_id, f"runs do not support {mode} comparisons"))

    cells: dict[str, dict[int, float | None]] = {}
    for row in rows:
        cells[row] = {}
        for n in top_ns:
            c = counted[row][n]
            cells[row][n] = (significant[row][n] / c) if c else None
    return SignificanceSummary(
        metric_name=metric_name,
        alpha=alpha,
        top_ns=top_ns,
        cells=cells,
        dataset_counts=counted,
        excluded=excluded,
    )


def _pooled_scores(records: list[ResultRecord], level: str) -> dict[str, float]:
    """Mean score per entity over every run of the dataset."""
    per_config: dict[tuple[str, str], list[float]] = {}
    for r in records:
        per_config.setdefault(r.config_id, []).append(r.value)
    config_means = {c: math.fsum(v) / len(v) for c, v in per_config.items()}
    if level == PARAM_LEVEL:
        return {params_id: v for (_, params_id), v in config_means.items()}
    per_pipeline: dict[str, list[float]] = {}
    for (pipeline_id, _), v in config_means.items():
        per_pipeline.setdefault(pipeline_id, []).append(v)
    return {p: math.fsum(v) / len(v) for p, v in per_pipeline.items()}
