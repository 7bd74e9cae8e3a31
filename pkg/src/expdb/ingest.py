"""File ingestion: external results corpora, meta-feature sidecars, and
local CSV tables.

Results files are long-format CSV (``dataset_id,pipeline_id,
pipeline_params_id,fold_index,repeat_index,metric_name,value``).  External
ids map deterministically to store UUIDs (UUID5 over the natural key), so
re-ingesting the same file creates nothing new.
"""

from __future__ import annotations

import csv
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from . import metamodel as mm
from .errors import InvalidInputError, NotFoundError
from .metrics import ResultRecord
from .store import ArtifactKind, ArtifactStore

_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "expdb/ingest")

RESULTS_COLUMNS = (
    "dataset_id",
    "pipeline_id",
    "pipeline_params_id",
    "fold_index",
    "repeat_index",
    "metric_name",
    "value",
)

_INGEST_AUTHOR = "ingest"


def natural_uuid(kind: str, *parts: object) -> str:
    return str(uuid.uuid5(_NAMESPACE, kind + ":" + "/".join(str(p) for p in parts)))


@dataclass
class IngestReport:
    """Bookkeeping for one ingestion pass: every input row is either
    ingested or skipped with a reason."""

    rows_total: int = 0
    rows_ingested: int = 0
    created: dict[str, int] = field(default_factory=dict)
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def count_created(self, kind: ArtifactKind) -> None:
        self.created[kind.value] = self.created.get(kind.value, 0) + 1

    def skip(self, row_number: int, reason: str) -> None:
        self.skipped.append((row_number, reason))

    @property
    def consistent(self) -> bool:
        return self.rows_ingested + len(self.skipped) == self.rows_total

    def to_dict(self) -> dict:
        return {
            "rows_total": self.rows_total,
            "rows_ingested": self.rows_ingested,
            "created": dict(self.created),
            "skipped": [{"row": r, "reason": reason} for r, reason in self.skipped],
        }


def _stub_dataset(external_id: str) -> mm.Dataset:
    return mm.Dataset(
        header=mm.CommonHeader.create(
            authors=[_INGEST_AUTHOR], tags=["ingested"], id=natural_uuid("dataset", external_id)
        ),
        source=mm.SourceRef(external_id=external_id),
    )


def _stub_pipeline(external_id: str) -> mm.Pipeline:
    return mm.Pipeline(
        header=mm.CommonHeader.create(
            authors=[_INGEST_AUTHOR], tags=["ingested"], id=natural_uuid("pipeline", external_id)
        ),
        task_type="classification",
        pipeline_type="external",
        steps=[mm.PipelineStep(name="estimator", operator=external_id, role="estimator")],
    )


def _ensure(store: ArtifactStore, kind: ArtifactKind, doc, report: IngestReport) -> bool:
    """Put the document unless its id already exists; True when created."""
    try:
        store.get_artifact(kind, doc.header.id)
        return False
    except NotFoundError:
        store.put_artifact(kind, doc)
        report.count_created(kind)
        return True


def _parse_results_row(row: dict, line: int) -> tuple[dict, str | None]:
    missing = [c for c in RESULTS_COLUMNS if not (row.get(c) or "").strip()]
    if missing:
        return {}, f"missing fields: {', '.join(missing)}"
    out = dict(row)
    try:
        out["fold_index"] = int(row["fold_index"])
        out["repeat_index"] = int(row["repeat_index"])
    except ValueError:
        return {}, "fold_index and repeat_index must be integers"
    if out["fold_index"] < 0 or out["repeat_index"] < 0:
        return {}, "fold_index and repeat_index must be non-negative"
    try:
        out["value"] = float(row["value"])
    except ValueError:
        return {}, f"value {row['value']!r} is not a number"
    if out["value"] != out["value"]:
        return {}, "value is NaN"
    metric = out["metric_name"]
    if metric.startswith("normalized_") and not -1.0 <= out["value"] <= 1.0:
        return {}, f"{metric} value {out['value']} outside [-1, 1]"
    return out, None


def ingest_results_csv(
    store: ArtifactStore,
    path: str | Path,
    metric_mapping: dict[str, str] | None = None,
) -> IngestReport:
    """Ingest a long-format results CSV, creating stub artifacts and linked
    runs.  ``metric_mapping`` renames external metric columns to canonical
    names.  Idempotent: natural keys dedupe on re-ingest."""
    report = IngestReport()
    metric_mapping = metric_mapping or {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for line, raw in enumerate(reader, start=2):
            report.rows_total += 1
            parsed, problem = _parse_results_row(raw, line)
            if problem:
                report.skip(line, problem)
                continue
            parsed["metric_name"] = metric_mapping.get(
                parsed["metric_name"], parsed["metric_name"]
            )
            rows.append((line, parsed))

    max_fold: dict[str, int] = {}
    for _, row in rows:
        d = row["dataset_id"]
        max_fold[d] = max(max_fold.get(d, 0), row["fold_index"])

    # group metric rows by run natural key
    run_groups: dict[tuple, list[tuple[int, dict]]] = {}
    for line, row in rows:
        key = (
            row["dataset_id"],
            row["pipeline_id"],
            row["pipeline_params_id"],
            row["fold_index"],
            row["repeat_index"],
        )
        run_groups.setdefault(key, []).append((line, row))

    for key in sorted(run_groups):
        dataset_ext, pipeline_ext, params_ext, fold, repeat = key
        group = run_groups[key]

        _ensure(store, ArtifactKind.DATASET, _stub_dataset(dataset_ext), report)
        _ensure(store, ArtifactKind.PIPELINE, _stub_pipeline(pipeline_ext), report)

        params_id = natural_uuid("pipeline_params", pipeline_ext, params_ext)
        _ensure(
            store,
            ArtifactKind.PIPELINE_PARAMS,
            mm.PipelineParameters(
                header=mm.CommonHeader.create(
                    authors=[_INGEST_AUTHOR], tags=["ingested"], id=params_id
                ),
                pipeline_id=natural_uuid("pipeline", pipeline_ext),
            ),
            report,
        )

        split_id = natural_uuid("dataset_params", dataset_ext, fold)
        _ensure(
            store,
            ArtifactKind.DATASET_PARAMS,
            mm.DatasetParameters(
                header=mm.CommonHeader.create(
                    authors=[_INGEST_AUTHOR], tags=["ingested"], id=split_id
                ),
                dataset_id=natural_uuid("dataset", dataset_ext),
                split_method="stratified_kfold",
                train_ratio=0.8,
                n_folds=max_fold[dataset_ext] + 1,
                fold_index=fold,
                seed=0,
            ),
            report,
        )

        run_id = natural_uuid("run", *key)
        metrics = {}
        lines_for_metric: dict[str, int] = {}
        duplicates = []
        for line, row in group:
            name = row["metric_name"]
            if name in metrics:
                duplicates.append((line, f"duplicate metric {name!r} for the same run"))
                continue
            metrics[name] = row["value"]
            lines_for_metric[name] = line

        try:
            existing = store.get_artifact(ArtifactKind.RUN, run_id)
        except NotFoundError:
            existing = None

        if existing is None:
            store.put_artifact(
                ArtifactKind.RUN,
                mm.Run(
                    header=mm.CommonHeader.create(
                        authors=[_INGEST_AUTHOR], tags=["ingested"], id=run_id
                    ),
                    run_kind="train",
                    dataset_id=natural_uuid("dataset", dataset_ext),
                    dataset_params_id=split_id,
                    pipeline_id=natural_uuid("pipeline", pipeline_ext),
                    pipeline_params_id=params_id,
                    metrics=metrics,
                    environment=mm.EnvironmentInfo(software={}, hardware="external"),
                    repeat_index=repeat,
                ),
            )
            report.count_created(ArtifactKind.RUN)
            report.rows_ingested += len(metrics)
        else:
            new_metrics = {n: v for n, v in metrics.items() if n not in existing.metrics}
            for name, line in lines_for_metric.items():
                if name in existing.metrics:
                    report.skip(line, f"run already ingested with metric {name!r}")
            if new_metrics:
                existing.metrics.update(new_metrics)
                store.replace_artifact(ArtifactKind.RUN, run_id, existing)
                report.rows_ingested += len(new_metrics)
        for line, reason in duplicates:
            report.skip(line, reason)

    return report


def ingest_meta_features_csv(store: ArtifactStore, path: str | Path) -> IngestReport:
    """Ingest a sidecar of dataset meta-features (``dataset_id,feature,
    value`` rows).  Known feature names fill the fixed vector; anything else
    lands in the extras map.  Creates dataset stubs as needed."""
    report = IngestReport()
    per_dataset: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line, row in enumerate(reader, start=2):
            report.rows_total += 1
            dataset = (row.get("dataset_id") or "").strip()
            feature = (row.get("feature") or "").strip()
            raw = (row.get("value") or "").strip()
            if not dataset or not feature or not raw:
                report.skip(line, "missing dataset_id, feature, or value")
                continue
            try:
                value = float(raw)
            except ValueError:
                report.skip(line, f"value {raw!r} is not a number")
                continue
            per_dataset.setdefault(dataset, []).append((line, feature, value))

    for dataset_ext in sorted(per_dataset):
        dataset_id = natural_uuid("dataset", dataset_ext)
        try:
            doc = store.get_artifact(ArtifactKind.DATASET, dataset_id)
            created = False
        except NotFoundError:
            doc = _stub_dataset(dataset_ext)
            created = True
        for line, feature, value in per_dataset[dataset_ext]:
            if feature in mm.META_FEATURE_NAMES:
                setattr(doc.meta_features, feature, value)
            else:
                doc.meta_features.extras[feature] = value
            report.rows_ingested += 1
        if created:
            store.put_artifact(ArtifactKind.DATASET, doc)
            report.count_created(ArtifactKind.DATASET)
        else:
            store.replace_artifact(ArtifactKind.DATASET, dataset_id, doc)
    return report


# ---------------------------------------------------------------------------
# Local CSV tables
# ---------------------------------------------------------------------------

_MAX_CATEGORICAL_OPTIONS = 20


def load_table_csv(
    path: str | Path, target_column: str | None = None, name: str | None = None
) -> mm.Table:
    """Read a CSV file into a typed table.  A column parses as numeric when
    every non-empty cell is a number; otherwise it is categorical up to 20
    distinct values and free text beyond.  Empty cells become missing."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise InvalidInputError(f"{path} is empty")
    header, data = rows[0], rows[1:]

    columns = []
    for j, col_name in enumerate(header):
        raw = [row[j] if j < len(row) else "" for row in data]
        non_empty = [c for c in raw if c.strip() != ""]
        numeric = True
        for cell in non_empty:
            try:
                float(cell)
            except ValueError:
                numeric = False
                break
        if numeric and non_empty:
            values = [float(c) if c.strip() != "" else None for c in raw]
            kind = mm.NUMERIC
        else:
            values = [c if c.strip() != "" else None for c in raw]
            distinct = {c for c in non_empty}
            kind = mm.CATEGORICAL if len(distinct) <= _MAX_CATEGORICAL_OPTIONS else mm.TEXT
        columns.append(mm.Column(name=col_name, kind=kind, values=values))

    table = mm.Table(name=name or path.stem, columns=columns, target_column=target_column)
    table.validate()
    return table


def records_for_datasets(
    store: ArtifactStore, dataset_ids: list[str], metric_name: str
) -> list[ResultRecord]:
    """Join stored runs with their split documents to produce analysis
    records for the given datasets."""
    from .metrics import records_from_runs
    from .store import ExperimentKey

    fold_of = {}
    for sid in store.list_ids(ArtifactKind.DATASET_PARAMS):
        params = store.get_artifact(ArtifactKind.DATASET_PARAMS, sid)
        fold_of[sid] = params.fold_index
    records = []
    for dataset_id in dataset_ids:
        runs = store.runs_for_experiment(ExperimentKey(dataset_id=dataset_id))
        records.extend(records_from_runs(runs, metric_name, fold_index_of=fold_of))
    return records
