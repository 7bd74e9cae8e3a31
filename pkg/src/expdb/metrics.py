"""Normalized performance metrics, run aggregation, and per-dataset rankings.

The "result source" policy decides how several runs of one experiment
collapse to a single value: take the first run (deterministically the one
with the smallest (dataset_params_id, repeat_index)) or the mean across all
runs.  Failed runs, recognisable by an empty metrics map, never enter an
aggregate.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass

from .errors import InvalidInputError, MissingMetricError
from .metamodel import Run
from .store import ExperimentKey

FIRST_RUN = "first_run"
MEAN_AGGREGATED = "mean_aggregated"
RESULT_SOURCES = (FIRST_RUN, MEAN_AGGREGATED)

PIPELINE_LEVEL = "pipeline"
PARAM_LEVEL = "param_config"

NORMALIZED_ACCURACY = "normalized_accuracy"

_KEY_FIELDS = (
    "dataset_id",
    "dataset_params_id",
    "pipeline_id",
    "pipeline_params_id",
    "input_trained_pipeline_id",
)


def normalized_accuracy(raw_accuracy: float, n_classes: int) -> float:
    """Rescale accuracy so random uniform choice maps to 0 and perfect
    prediction to 1; may be negative for worse-than-random classifiers."""
    if n_classes < 2:
        raise InvalidInputError("n_classes must be >= 2")
    if not 0.0 <= raw_accuracy <= 1.0:
        raise InvalidInputError("raw accuracy must be within [0, 1]")
    baseline = 1.0 / n_classes
    return (raw_accuracy - baseline) / (1.0 - baseline)


def majority_normalized_accuracy(raw_accuracy: float, majority_class_ratio: float) -> float:
    """Alternate baseline: rescale against the majority-class rate instead of
    uniform random choice."""
    if not 0.0 <= raw_accuracy <= 1.0:
        raise InvalidInputError("raw accuracy must be within [0, 1]")
    if not 0.0 <= majority_class_ratio < 1.0:
        raise InvalidInputError("majority class ratio must be within [0, 1)")
    return (raw_accuracy - majority_class_ratio) / (1.0 - majority_class_ratio)


@dataclass(frozen=True)
class ResultRecord:
    """One metric value of one run, flattened for analysis.  ``fold_index``
    comes from the run's split document (-1 when unknown)."""

    dataset_id: str
    pipeline_id: str
    pipeline_params_id: str
    dataset_params_id: str
    fold_index: int
    repeat_index: int
    value: float

    @property
    def config_id(self) -> tuple[str, str]:
        return (self.pipeline_id, self.pipeline_params_id)

    @property
    def order_key(self) -> tuple[str, int]:
        return (self.dataset_params_id, self.repeat_index)


def records_from_runs(
    runs: list[Run],
    metric_name: str,
    fold_index_of: dict[str, int] | None = None,
) -> list[ResultRecord]:
    """Flatten completed runs to single-metric records.  Failed runs (empty
    metrics) are dropped; a completed run lacking the metric is an error."""
    records = []
    for run in runs:
        if not run.metrics:
            continue
        if metric_name not in run.metrics:
            raise MissingMetricError(
                f"run {run.header.id} has no metric {metric_name!r}"
            )
        fold = -1
        if fold_index_of is not None:
            fold = fold_index_of.get(run.dataset_params_id, -1)
        records.append(
            ResultRecord(
                dataset_id=run.dataset_id,
                pipeline_id=run.pipeline_id,
                pipeline_params_id=run.pipeline_params_id,
                dataset_params_id=run.dataset_params_id,
                fold_index=fold,
                repeat_index=run.repeat_index,
                value=float(run.metrics[metric_name]),
            )
        )
    return records


@dataclass
class AggregateRow:
    key: ExperimentKey
    metric_name: str
    mean: float
    std: float
    count: int
    first: float


def aggregate_metric(
    runs: list[Run], metric_name: str, group: list[str]
) -> list[AggregateRow]:
    """One row of sample statistics per distinct projection of the grouping
    fields.  ``std`` uses the n-1 denominator and is 0 for singleton groups;
    ``first`` is the value of the run with the smallest
    (dataset_params_id, repeat_index)."""
    for field_name in group:
        if field_name not in _KEY_FIELDS:
            raise InvalidInputError(f"unknown grouping field {field_name!r}")
    groups: dict[tuple, list[Run]] = {}
    for run in runs:
        if not run.metrics:
            continue  # failed run
        if metric_name not in run.metrics:
            raise MissingMetricError(f"run {run.header.id} has no metric {metric_name!r}")
        key = tuple(getattr(run, f) for f in group)
        groups.setdefault(key, []).append(run)

    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        members = sorted(
            groups[key], key=lambda r: (r.dataset_params_id, r.repeat_index, r.header.id)
        )
        values = [float(r.metrics[metric_name]) for r in members]
        mean = statistics.fmean(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        exp_key = ExperimentKey(**{f: v for f, v in zip(group, key)})
        rows.append(
            AggregateRow(
                key=exp_key,
                metric_name=metric_name,
                mean=mean,
                std=std,
                count=len(values),
                first=values[0],
            )
        )
    return rows


@dataclass
class Ranking:
    """Descending-score ranking of pipelines or parameter configurations for
    one dataset.  Ties break on ascending entity id; empty entries signal
    "no runs in scope" (not an error)."""

    metric_name: str
    level: str
    entries: list[tuple[str, float]]

    @property
    def empty(self) -> bool:
        return not self.entries


def _config_values(
    records: list[ResultRecord], source: str
) -> dict[tuple[str, str], float]:
    """Collapse records per configuration according to the result source."""
    if source not in RESULT_SOURCES:
        raise InvalidInputError(f"unknown result source {source!r}")
    per_config: dict[tuple[str, str], list[ResultRecord]] = {}
    for rec in records:
        per_config.setdefault(rec.config_id, []).append(rec)
    out = {}
    for config, recs in per_config.items():
        if source == FIRST_RUN:
            out[config] = min(recs, key=lambda r: r.order_key).value
        else:
            out[config] = math.fsum(r.value for r in recs) / len(recs)
    return out


def rank_entities(
    records: list[ResultRecord],
    dataset_id: str,
    level: str,
    metric_name: str,
    source: str = MEAN_AGGREGATED,
    top_n: int = 10,
    scope_dataset_params_id: str | None = None,
) -> Ranking:
    """Rank parameter configurations directly, or pipelines by the equal
    -weight mean over their configurations' collapsed values."""
    if level not in (PIPELINE_LEVEL, PARAM_LEVEL):
        raise InvalidInputError(f"unknown ranking level {level!r}")
    if top_n < 1:
        raise InvalidInputError("top_n must be >= 1")
    scoped = [
        r
        for r in records
        if r.dataset_id == dataset_id
        and (scope_dataset_params_id is None or r.dataset_params_id == scope_dataset_params_id)
    ]
    config_values = _config_values(scoped, source)
    if level == PARAM_LEVEL:
        scored = [(params_id, v) for (_, params_id), v in config_values.items()]
    else:
        per_pipeline: dict[str, list[float]] = {}
        for (pipeline_id, _), v in config_values.items():
            per_pipeline.setdefault(pipeline_id, []).append(v)
        scored = [(pid, math.fsum(vs) / len(vs)) for pid, vs in per_pipeline.items()]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return Ranking(metric_name=metric_name, level=level, entries=scored[:top_n])


# -- serialisation -----------------------------------------------------------


def ranking_to_csv(ranking: Ranking) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["rank", "entity_id", "score"])
    for i, (entity, score) in enumerate(ranking.entries, start=1):
        writer.writerow([i, entity, repr(score)])
    return buf.getvalue()


def ranking_to_dict(ranking: Ranking) -> dict:
    return {
        "metric_name": ranking.metric_name,
        "level": ranking.level,
        "entries": [{"entity_id": e, "score": s} for e, s in ranking.entries],
    }


def aggregates_to_csv(rows: list[AggregateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["dataset_id", "dataset_params_id", "pipeline_id", "pipeline_params_id",
         "metric_name", "mean", "std", "count", "first"]
    )
    for row in rows:
        writer.writerow(
            [
                row.key.dataset_id or "",
                row.key.dataset_params_id or "",
                row.key.pipeline_id or "",
                row.key.pipeline_params_id or "",
                row.metric_name,
                repr(row.mean),
                repr(row.std),
                row.count,
                repr(row.first),
            ]
        )
    return buf.getvalue()
