"""Artifact documents, tabular schema inference, and meta-feature extraction.

Six document types describe an experiment: a dataset, the way it was split
(dataset parameters), a pipeline, its concrete hyperparameter values
(pipeline parameters), a run, and an optional trained pipeline.  Every
document shares a common header (id, authors, tags, created_at) and
serialises to plain JSON; the per-feature data schema serialises as a
JSON-Schema-compatible object so external validators can consume it.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable

from .errors import InvalidInputError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
TEXT = "text"
COLUMN_KINDS = (NUMERIC, CATEGORICAL, TEXT)

STEP_ROLES = ("preprocessor", "estimator", "other")
PARAM_KINDS = ("int", "float", "cat", "bool", "str")
SPLIT_METHODS = ("stratified_kfold", "holdout", "explicit")
RUN_KINDS = ("train", "inference")

#: Fixed meta-feature vector used for dataset similarity.  User-defined
#: extras ride along in ``MetaFeatures.extras`` but are excluded from the
#: default distance.
META_FEATURE_NAMES = (
    "n_instances",
    "n_features",
    "n_numeric",
    "n_categorical",
    "n_classes",
    "class_entropy",
    "majority_class_ratio",
    "missing_fraction",
    "mean_feature_skewness",
    "mean_feature_kurtosis",
)


def new_id() -> str:
    return str(uuid.uuid4())


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def parse_timestamp(value: str) -> datetime:
    # Python 3.10 fromisoformat does not accept a trailing Z.
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)


def is_missing(cell: Any) -> bool:
    """A cell is missing when it is None or a float NaN."""
    if cell is None:
        return True
    return isinstance(cell, float) and math.isnan(cell)


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    path: str
    message: str


@dataclass
class ValidationReport:
    """Outcome of a validation pass; ``ok`` iff no violations were recorded."""

    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [{"path": v.path, "message": v.message} for v in self.violations],
        }


# ---------------------------------------------------------------------------
# Common header
# ---------------------------------------------------------------------------


@dataclass
class CommonHeader:
    id: str = ""
    authors: list[str] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)
    created_at: str = ""

    @classmethod
    def create(
        cls,
        authors: Iterable[str],
        tags: Iterable[str] = (),
        id: str | None = None,
    ) -> "CommonHeader":
        return cls(
            id=id if id is not None else new_id(),
            authors=list(authors),
            tags=list(tags),
            created_at=utc_now_iso(),
        )


def _validate_header(header: CommonHeader, report: ValidationReport) -> None:
    if header.id:
        try:
            uuid.UUID(header.id)
        except (ValueError, AttributeError, TypeError):
            report.add("id", f"not a valid UUID: {header.id!r}")
    if not header.authors:
        report.add("authors", "at least one author is required")
    elif not all(isinstance(a, str) and a for a in header.authors):
        report.add("authors", "authors must be non-empty strings")
    if not all(isinstance(t, str) for t in header.tags):
        report.add("tags", "tags must be strings")
    if header.created_at:
        try:
            parse_timestamp(header.created_at)
        except ValueError:
            report.add("created_at", f"not an ISO-8601 timestamp: {header.created_at!r}")


# ---------------------------------------------------------------------------
# In-memory table
# ---------------------------------------------------------------------------


@dataclass
class Column:
    name: str
    kind: str  # numeric | categorical | text
    values: list


@dataclass
class Table:
    """Typed in-memory table: the carrier for schema inference, meta-feature
    extraction, and splitting.  Missing cells are None (or NaN for numeric
    columns)."""

    name: str
    columns: list[Column]
    target_column: str | None = None

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values) if self.columns else 0

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise InvalidInputError(f"no such column: {name!r}")

    def feature_columns(self) -> list[Column]:
        return [c for c in self.columns if c.name != self.target_column]

    def validate(self) -> None:
        """Raise InvalidInputError on any structural invariant violation."""
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidInputError("column names must be unique")
        lengths = {len(c.values) for c in self.columns}
        if len(lengths) > 1:
            raise InvalidInputError(f"columns have unequal lengths: {sorted(lengths)}")
        for col in self.columns:
            if col.kind not in COLUMN_KINDS:
                raise InvalidInputError(f"unknown column kind {col.kind!r} for {col.name!r}")
        if self.target_column is not None and self.target_column not in names:
            raise InvalidInputError(f"target column {self.target_column!r} not in table")


# ---------------------------------------------------------------------------
# Data schema
# ---------------------------------------------------------------------------


@dataclass
class SchemaEntry:
    name: str
    kind: str  # numeric | categorical | text
    minimum: float | None = None
    maximum: float | None = None
    options: list[str] | None = None


@dataclass
class DataSchema:
    entries: list[SchemaEntry] = field(default_factory=list)

    def entry(self, name: str) -> SchemaEntry | None:
        for e in self.entries:
            if e.name == name:
                return e
        return None

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_json_schema(self) -> dict:
        """JSON-Schema-compatible form.  Column order is carried by the
        ``required`` array since object keys may be re-sorted on disk."""
        props: dict[str, dict] = {}
        for e in self.entries:
            if e.kind == NUMERIC:
                p: dict[str, Any] = {"type": "number"}
                if e.minimum is not None:
                    p["minimum"] = e.minimum
                if e.maximum is not None:
                    p["maximum"] = e.maximum
            elif e.kind == CATEGORICAL:
                p = {"type": "string", "enum": list(e.options or [])}
            else:
                p = {"type": "string"}
            props[e.name] = p
        return {"type": "object", "required": self.names(), "properties": props}

    @classmethod
    def from_json_schema(cls, obj: dict) -> "DataSchema":
        props = obj.get("properties", {})
        order = obj.get("required") or list(props)
        entries = []
        for name in order:
            p = props.get(name, {})
            if p.get("type") == "number":
                entries.append(
                    SchemaEntry(name, NUMERIC, minimum=p.get("minimum"), maximum=p.get("maximum"))
                )
            elif "enum" in p:
                entries.append(SchemaEntry(name, CATEGORICAL, options=list(p["enum"])))
            else:
                entries.append(SchemaEntry(name, TEXT))
        return cls(entries)


def _validate_data_schema(schema: DataSchema, report: ValidationReport, prefix: str) -> None:
    names = schema.names()
    if len(set(names)) != len(names):
        report.add(prefix, "schema entry names must be unique")
    for e in schema.entries:
        path = f"{prefix}.{e.name}"
        if e.kind not in COLUMN_KINDS:
            report.add(path, f"unknown kind {e.kind!r}")
        if e.kind == NUMERIC and e.minimum is not None and e.maximum is not None:
            if e.minimum > e.maximum:
                report.add(path, f"range [{e.minimum}, {e.maximum}] has min > max")
        if e.kind == CATEGORICAL and not e.options:
            report.add(path, "categorical entry needs a non-empty option list")


# ---------------------------------------------------------------------------
# Meta-features
# ---------------------------------------------------------------------------


@dataclass
class MetaFeatures:
    """Fixed scalar descriptors of a dataset plus an open map of
    user-defined extras.  None marks a feature that could not be computed
    (e.g. stub datasets ingested without raw data)."""

    n_instances: float | None = None
    n_features: float | None = None
    n_numeric: float | None = None
    n_categorical: float | None = None
    n_classes: float | None = None
    class_entropy: float | None = None
    majority_class_ratio: float | None = None
    missing_fraction: float | None = None
    mean_feature_skewness: float | None = None
    mean_feature_kurtosis: float | None = None
    extras: dict[str, float] = field(default_factory=dict)

    def get(self, name: str) -> float | None:
        if name in META_FEATURE_NAMES:
            return getattr(self, name)
        return self.extras.get(name)


def _validate_meta_features(mf: MetaFeatures, report: ValidationReport, prefix: str) -> None:
    def bad(name, msg):
        report.add(f"{prefix}.{name}", msg)

    if mf.majority_class_ratio is not None and not 0.0 <= mf.majority_class_ratio <= 1.0:
        bad("majority_class_ratio", "must be within [0, 1]")
    if mf.class_entropy is not None and mf.class_entropy < 0:
        bad("class_entropy", "must be non-negative")
    if mf.missing_fraction is not None and not 0.0 <= mf.missing_fraction <= 1.0:
        bad("missing_fraction", "must be within [0, 1]")
    if (
        mf.n_features is not None
        and mf.n_numeric is not None
        and mf.n_categorical is not None
        and mf.n_numeric + mf.n_categorical > mf.n_features
    ):
        bad("n_features", "n_numeric + n_categorical exceeds n_features")


# ---------------------------------------------------------------------------
# Artifact documents
# ---------------------------------------------------------------------------


@dataclass
class TargetSpec:
    task: str
    features: list[str] = field(default_factory=list)


@dataclass
class SourceRef:
    uri: str | None = None
    external_id: str | None = None


@dataclass
class ObjectRef:
    """Content address of a binary blob: lowercase hex SHA-256 plus size."""

    hash: str
    size_bytes: int


@dataclass
class Dataset:
    header: CommonHeader
    data_schema: DataSchema = field(default_factory=DataSchema)
    meta_features: MetaFeatures = field(default_factory=MetaFeatures)
    target: TargetSpec | None = None
    source: SourceRef | None = None


@dataclass
class DatasetParameters:
    """How a dataset is configured for one training job: split method,
    ratios, seed, and optionally the exact index lists."""

    header: CommonHeader
    dataset_id: str = ""
    split_method: str = "stratified_kfold"
    train_ratio: float = 0.8
    n_folds: int = 0
    fold_index: int = 0
    seed: int = 0
    train_indices: list[int] | None = None
    test_indices: list[int] | None = None


@dataclass
class PipelineStep:
    name: str
    operator: str
    role: str = "other"


@dataclass
class ParameterSpec:
    name: str
    kind: str  # int | float | cat | bool | str
    minimum: float | None = None
    maximum: float | None = None
    options: list | None = None
    default: Any = None


@dataclass
class Pipeline:
    header: CommonHeader
    task_type: str = "classification"
    pipeline_type: str = ""
    steps: list[PipelineStep] = field(default_factory=list)
    input_data_schema: DataSchema = field(default_factory=DataSchema)
    parameter_schema: list[ParameterSpec] = field(default_factory=list)


@dataclass
class PipelineParameters:
    header: CommonHeader
    pipeline_id: str = ""
    values: dict[str, Any] = field(default_factory=dict)


@dataclass
class EnvironmentInfo:
    software: dict[str, str] = field(default_factory=dict)
    hardware: str = ""


@dataclass
class Run:
    """One computing job.  A failed run carries an empty metrics map and is
    excluded from aggregation downstream."""

    header: CommonHeader
    run_kind: str = "train"
    dataset_id: str = ""
    dataset_params_id: str = ""
    pipeline_id: str = ""
    pipeline_params_id: str = ""
    metrics: dict[str, float] = field(default_factory=dict)
    environment: EnvironmentInfo = field(default_factory=EnvironmentInfo)
    input_trained_pipeline_id: str | None = None
    output_trained_pipeline_id: str | None = None
    timing_seconds: float | None = None
    repeat_index: int = 0


@dataclass
class TrainedPipeline:
    header: CommonHeader
    origin_run_id: str = ""
    asset_refs: list[ObjectRef] = field(default_factory=list)


ArtifactDocument = (
    Dataset | DatasetParameters | Pipeline | PipelineParameters | Run | TrainedPipeline
)


# ---------------------------------------------------------------------------
# Document validation
# ---------------------------------------------------------------------------


def _validate_dataset(doc: Dataset, report: ValidationReport) -> None:
    _validate_data_schema(doc.data_schema, report, "data_schema")
    _validate_meta_features(doc.meta_features, report, "meta_features")
    if doc.target is not None:
        known = set(doc.data_schema.names())
        for name in doc.target.features:
            if name not in known:
                report.add("target.features", f"{name!r} not present in data_schema")


def _validate_dataset_params(doc: DatasetParameters, report: ValidationReport) -> None:
    if doc.split_method not in SPLIT_METHODS:
        report.add("split_method", f"unknown split method {doc.split_method!r}")
    if not 0.0 < doc.train_ratio < 1.0:
        report.add("train_ratio", "must be within (0, 1)")
    if doc.split_method == "stratified_kfold":
        if doc.n_folds < 1:
            report.add("n_folds", "must be >= 1 for k-fold splits")
        elif not 0 <= doc.fold_index < doc.n_folds:
            report.add("fold_index", f"fold_index {doc.fold_index} outside [0, {doc.n_folds})")
    has_train = doc.train_indices is not None
    has_test = doc.test_indices is not None
    if has_train != has_test:
        report.add("train_indices", "train and test indices must be given together")
    if doc.split_method == "explicit" and not has_train:
        report.add("split_method", "explicit split requires stored index lists")
    if has_train and has_test:
        train, test = set(doc.train_indices), set(doc.test_indices)
        if train & test:
            report.add("test_indices", "train and test indices overlap")
        if any(i < 0 for i in train | test):
            report.add("train_indices", "indices must be non-negative")


def _validate_pipeline(doc: Pipeline, report: ValidationReport) -> None:
    if not doc.steps:
        report.add("steps", "a pipeline needs at least one step")
    for i, step in enumerate(doc.steps):
        if step.role not in STEP_ROLES:
            report.add(f"steps[{i}].role", f"unknown role {step.role!r}")
    _validate_data_schema(doc.input_data_schema, report, "input_data_schema")
    names = [p.name for p in doc.parameter_schema]
    if len(set(names)) != len(names):
        report.add("parameter_schema", "parameter names must be unique")
    for spec in doc.parameter_schema:
        path = f"parameter_schema.{spec.name}"
        if spec.kind not in PARAM_KINDS:
            report.add(path, f"unknown parameter kind {spec.kind!r}")
        if spec.kind == "cat" and not spec.options:
            report.add(path, "categorical parameter needs options")
        if spec.minimum is not None and spec.maximum is not None and spec.minimum > spec.maximum:
            report.add(path, "minimum exceeds maximum")


def _validate_pipeline_params(doc: PipelineParameters, report: ValidationReport) -> None:
    if not isinstance(doc.values, dict):
        report.add("values", "values must be a mapping")


def _validate_run(doc: Run, report: ValidationReport) -> None:
    if doc.run_kind not in RUN_KINDS:
        report.add("run_kind", f"unknown run kind {doc.run_kind!r}")
    if doc.run_kind == "inference" and not doc.input_trained_pipeline_id:
        report.add("input_trained_pipeline_id", "inference runs need an input trained pipeline")
    if doc.repeat_index < 0:
        report.add("repeat_index", "must be non-negative")
    for name, value in doc.metrics.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
            report.add(f"metrics.{name}", f"metric value must be a finite number, got {value!r}")
    if doc.timing_seconds is not None and doc.timing_seconds < 0:
        report.add("timing_seconds", "must be non-negative")


def _validate_trained_pipeline(doc: TrainedPipeline, report: ValidationReport) -> None:
    if not doc.origin_run_id:
        report.add("origin_run_id", "a trained pipeline must link its training run")
    for i, ref in enumerate(doc.asset_refs):
        path = f"asset_refs[{i}]"
        h = ref.hash
        if len(h) != 64 or any(c not in "0123456789abcdef" for c in h):
            report.add(path, "hash must be 64 lowercase hex characters")
        if ref.size_bytes < 0:
            report.add(path, "size_bytes must be non-negative")


_VALIDATORS = {
    Dataset: _validate_dataset,
    DatasetParameters: _validate_dataset_params,
    Pipeline: _validate_pipeline,
    PipelineParameters: _validate_pipeline_params,
    Run: _validate_run,
    TrainedPipeline: _validate_trained_pipeline,
}


def validate_document(doc: ArtifactDocument) -> ValidationReport:
    """Intra-document validation: header plus type-specific invariants.
    Cross-document rules (link resolution, parameter values against the
    linked pipeline schema) are enforced by the store."""
    report = ValidationReport()
    _validate_header(doc.header, report)
    _VALIDATORS[type(doc)](doc, report)
    return report


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def infer_data_schema(table: Table) -> DataSchema:
    """Observed schema of a table: numeric ranges are the observed extremes,
    categorical options the distinct observed values sorted lexicographically."""
    table.validate()
    if not table.columns:
        raise InvalidInputError("cannot infer a schema from a table with no columns")
    entries = []
    for col in table.columns:
        present = [v for v in col.values if not is_missing(v)]
        if col.kind == NUMERIC:
            lo = float(min(present)) if present else None
            hi = float(max(present)) if present else None
            entries.append(SchemaEntry(col.name, NUMERIC, minimum=lo, maximum=hi))
        elif col.kind == CATEGORICAL:
            options = sorted({str(v) for v in present})
            entries.append(SchemaEntry(col.name, CATEGORICAL, options=options or [""]))
        else:
            entries.append(SchemaEntry(col.name, TEXT))
    return DataSchema(entries)


def validate_rows(table: Table, schema: DataSchema) -> ValidationReport:
    """Check every cell of the table against the schema.  Missing cells are
    always acceptable; column-name mismatches become violations rather than
    errors."""
    table.validate()
    report = ValidationReport()
    table_names = {c.name for c in table.columns}
    for entry in schema.entries:
        if entry.name not in table_names:
            report.add(entry.name, "schema column missing from table")
    for col in table.columns:
        entry = schema.entry(col.name)
        if entry is None:
            report.add(col.name, "table column not present in schema")
            continue
        for i, cell in enumerate(col.values):
            if is_missing(cell):
                continue
            path = f"row[{i}].{col.name}"
            if entry.kind == NUMERIC:
                if not isinstance(cell, (int, float)) or isinstance(cell, bool):
                    report.add(path, f"expected a number, got {cell!r}")
                elif entry.minimum is not None and cell < entry.minimum:
                    report.add(path, f"{cell} below minimum {entry.minimum}")
                elif entry.maximum is not None and cell > entry.maximum:
                    report.add(path, f"{cell} above maximum {entry.maximum}")
            elif entry.kind == CATEGORICAL:
                if str(cell) not in (entry.options or []):
                    report.add(path, f"{cell!r} not among allowed options")
            else:  # text
                if not isinstance(cell, str):
                    report.add(path, f"expected text, got {cell!r}")
    return report


def _column_moments(values: list[float]) -> tuple[float, float]:
    """Population skewness g1 = m3 / m2^1.5 and excess kurtosis
    g2 = m4 / m2^2 - 3.  Degenerate columns (constant or singleton)
    contribute 0 for both."""
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    # fsum keeps the result independent of row order
    mean = math.fsum(values) / n
    m2 = math.fsum((v - mean) ** 2 for v in values) / n
    if m2 <= 0.0:
        return 0.0, 0.0
    m3 = math.fsum((v - mean) ** 3 for v in values) / n
    m4 = math.fsum((v - mean) ** 4 for v in values) / n
    return m3 / m2**1.5, m4 / m2**2 - 3.0


def extract_meta_features(table: Table) -> MetaFeatures:
    """Compute the fixed meta-feature vector from a table.

    Class statistics come from the target column (0 when there is no
    target); entropy is in bits.  Skewness/kurtosis aggregate numeric
    feature columns only, with missing cells dropped per column; the
    missing fraction counts all feature cells.
    """
    table.validate()
    features = table.feature_columns()
    n_rows = table.n_rows
    n_features = len(features)
    n_numeric = sum(1 for c in features if c.kind == NUMERIC)
    n_categorical = sum(1 for c in features if c.kind == CATEGORICAL)

    missing = sum(1 for c in features for v in c.values if is_missing(v))
    total_cells = n_rows * n_features
    missing_fraction = missing / total_cells if total_cells else 0.0

    n_classes = 0
    entropy = 0.0
    majority = 0.0
    if table.target_column is not None:
        target = table.column(table.target_column)
        counts: dict[Any, int] = {}
        for v in target.values:
            if is_missing(v):
                continue
            counts[v] = counts.get(v, 0) + 1
        total = sum(counts.values())
        if total:
            n_classes = len(counts)
            majority = max(counts.values()) / total
            entropy = -math.fsum(
                (c / total) * math.log2(c / total) for c in sorted(counts.values()) if c > 0
            )
            entropy = max(entropy, 0.0)

    skews, kurts = [], []
    for col in features:
        if col.kind != NUMERIC:
            continue
        present = [float(v) for v in col.values if not is_missing(v)]
        s, k = _column_moments(present)
        skews.append(s)
        kurts.append(k)

    return MetaFeatures(
        n_instances=float(n_rows),
        n_features=float(n_features),
        n_numeric=float(n_numeric),
        n_categorical=float(n_categorical),
        n_classes=float(n_classes),
        class_entropy=entropy,
        majority_class_ratio=majority,
        missing_fraction=missing_fraction,
        mean_feature_skewness=sum(skews) / len(skews) if skews else 0.0,
        mean_feature_kurtosis=sum(kurts) / len(kurts) if kurts else 0.0,
    )


def check_param_values(
    values: PipelineParameters | dict[str, Any],
    schema: list[ParameterSpec],
) -> ValidationReport:
    """Validate concrete hyperparameter values against a pipeline's
    parameter schema.  An empty value map is valid (defaults assumed)."""
    if isinstance(values, PipelineParameters):
        values = values.values
    report = ValidationReport()
    by_name = {s.name: s for s in schema}
    for name, value in values.items():
        path = f"values.{name}"
        spec = by_name.get(name)
        if spec is None:
            report.add(path, "parameter not declared in schema")
            continue
        if spec.kind == "int":
            if not isinstance(value, int) or isinstance(value, bool):
                report.add(path, f"expected an integer, got {value!r}")
                continue
        elif spec.kind == "float":
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                report.add(path, f"expected a number, got {value!r}")
                continue
        elif spec.kind == "bool":
            if not isinstance(value, bool):
                report.add(path, f"expected a boolean, got {value!r}")
                continue
        elif spec.kind == "str":
            if not isinstance(value, str):
                report.add(path, f"expected a string, got {value!r}")
                continue
        elif spec.kind == "cat":
            if value not in (spec.options or []):
                report.add(path, f"{value!r} not among allowed options")
            continue
        if spec.minimum is not None and value < spec.minimum:
            report.add(path, f"{value} below minimum {spec.minimum}")
        if spec.maximum is not None and value > spec.maximum:
            report.add(path, f"{value} above maximum {spec.maximum}")
    return report


# ---------------------------------------------------------------------------
# JSON (de)serialisation
# ---------------------------------------------------------------------------


def _header_to_dict(h: CommonHeader) -> dict:
    return {"id": h.id, "authors": list(h.authors), "tags": list(h.tags), "created_at": h.created_at}


def _header_from_dict(d: dict) -> CommonHeader:
    return CommonHeader(
        id=d.get("id", ""),
        authors=list(d.get("authors", [])),
        tags=list(d.get("tags", [])),
        created_at=d.get("created_at", ""),
    )


def _meta_features_to_dict(mf: MetaFeatures) -> dict:
    d: dict[str, Any] = {name: getattr(mf, name) for name in META_FEATURE_NAMES}
    d["extras"] = dict(mf.extras)
    return d


def _meta_features_from_dict(d: dict) -> MetaFeatures:
    kwargs = {name: d.get(name) for name in META_FEATURE_NAMES}
    return MetaFeatures(extras=dict(d.get("extras", {})), **kwargs)


def document_to_dict(doc: ArtifactDocument) -> dict:
    d = _header_to_dict(doc.header)
    if isinstance(doc, Dataset):
        d["data_schema"] = doc.data_schema.to_json_schema()
        d["meta_features"] = _meta_features_to_dict(doc.meta_features)
        d["target"] = (
            None
            if doc.target is None
            else {"task": doc.target.task, "features": list(doc.target.features)}
        )
        d["source"] = (
            None
            if doc.source is None
            else {"uri": doc.source.uri, "external_id": doc.source.external_id}
        )
    elif isinstance(doc, DatasetParameters):
        d.update(
            dataset_id=doc.dataset_id,
            split_method=doc.split_method,
            train_ratio=doc.train_ratio,
            n_folds=doc.n_folds,
            fold_index=doc.fold_index,
            seed=doc.seed,
            train_indices=doc.train_indices,
            test_indices=doc.test_indices,
        )
    elif isinstance(doc, Pipeline):
        d.update(
            task_type=doc.task_type,
            pipeline_type=doc.pipeline_type,
            steps=[{"name": s.name, "operator": s.operator, "role": s.role} for s in doc.steps],
            input_data_schema=doc.input_data_schema.to_json_schema(),
            parameter_schema=[
                {
                    "name": p.name,
                    "kind": p.kind,
                    "minimum": p.minimum,
                    "maximum": p.maximum,
                    "options": p.options,
                    "default": p.default,
                }
                for p in doc.parameter_schema
            ],
        )
    elif isinstance(doc, PipelineParameters):
        d.update(pipeline_id=doc.pipeline_id, values=dict(doc.values))
    elif isinstance(doc, Run):
        d.update(
            run_kind=doc.run_kind,
            dataset_id=doc.dataset_id,
            dataset_params_id=doc.dataset_params_id,
            pipeline_id=doc.pipeline_id,
            pipeline_params_id=doc.pipeline_params_id,
            input_trained_pipeline_id=doc.input_trained_pipeline_id,
            output_trained_pipeline_id=doc.output_trained_pipeline_id,
            metrics=dict(doc.metrics),
            environment={
                "software": dict(doc.environment.software),
                "hardware": doc.environment.hardware,
            },
            timing_seconds=doc.timing_seconds,
            repeat_index=doc.repeat_index,
        )
    elif isinstance(doc, TrainedPipeline):
        d.update(
            origin_run_id=doc.origin_run_id,
            asset_refs=[{"hash": r.hash, "size_bytes": r.size_bytes} for r in doc.asset_refs],
        )
    else:  # pragma: no cover - defensive
        raise InvalidInputError(f"unknown document type {type(doc).__name__}")
    return d


def _dataset_from_dict(d: dict) -> Dataset:
    target = d.get("target")
    source = d.get("source")
    return Dataset(
        header=_header_from_dict(d),
        data_schema=DataSchema.from_json_schema(d.get("data_schema", {})),
        meta_features=_meta_features_from_dict(d.get("meta_features", {})),
        target=None
        if target is None
        else TargetSpec(task=target.get("task", ""), features=list(target.get("features", []))),
        source=None
        if source is None
        else SourceRef(uri=source.get("uri"), external_id=source.get("external_id")),
    )


def _dataset_params_from_dict(d: dict) -> DatasetParameters:
    return DatasetParameters(
        header=_header_from_dict(d),
        dataset_id=d.get("dataset_id", ""),
        split_method=d.get("split_method", "stratified_kfold"),
        train_ratio=d.get("train_ratio", 0.8),
        n_folds=d.get("n_folds", 0),
        fold_index=d.get("fold_index", 0),
        seed=d.get("seed", 0),
        train_indices=d.get("train_indices"),
        test_indices=d.get("test_indices"),
    )


def _pipeline_from_dict(d: dict) -> Pipeline:
    return Pipeline(
        header=_header_from_dict(d),
        task_type=d.get("task_type", ""),
        pipeline_type=d.get("pipeline_type", ""),
        steps=[
            PipelineStep(s.get("name", ""), s.get("operator", ""), s.get("role", "other"))
            for s in d.get("steps", [])
        ],
        input_data_schema=DataSchema.from_json_schema(d.get("input_data_schema", {})),
        parameter_schema=[
            ParameterSpec(
                name=p.get("name", ""),
                kind=p.get("kind", "float"),
                minimum=p.get("minimum"),
                maximum=p.get("maximum"),
                options=p.get("options"),
                default=p.get("default"),
            )
            for p in d.get("parameter_schema", [])
        ],
    )


def _pipeline_params_from_dict(d: dict) -> PipelineParameters:
    return PipelineParameters(
        header=_header_from_dict(d),
        pipeline_id=d.get("pipeline_id", ""),
        values=dict(d.get("values", {})),
    )


def _run_from_dict(d: dict) -> Run:
    env = d.get("environment", {})
    return Run(
        header=_header_from_dict(d),
        run_kind=d.get("run_kind", "train"),
        dataset_id=d.get("dataset_id", ""),
        dataset_params_id=d.get("dataset_params_id", ""),
        pipeline_id=d.get("pipeline_id", ""),
        pipeline_params_id=d.get("pipeline_params_id", ""),
        input_trained_pipeline_id=d.get("input_trained_pipeline_id"),
        output_trained_pipeline_id=d.get("output_trained_pipeline_id"),
        metrics=dict(d.get("metrics", {})),
        environment=EnvironmentInfo(
            software=dict(env.get("software", {})), hardware=env.get("hardware", "")
        ),
        timing_seconds=d.get("timing_seconds"),
        repeat_index=d.get("repeat_index", 0),
    )


def _trained_pipeline_from_dict(d: dict) -> TrainedPipeline:
    return TrainedPipeline(
        header=_header_from_dict(d),
        origin_run_id=d.get("origin_run_id", ""),
        asset_refs=[
            ObjectRef(hash=r.get("hash", ""), size_bytes=r.get("size_bytes", 0))
            for r in d.get("asset_refs", [])
        ],
    )


DOCUMENT_PARSERS = {
    Dataset: _dataset_from_dict,
    DatasetParameters: _dataset_params_from_dict,
    Pipeline: _pipeline_from_dict,
    PipelineParameters: _pipeline_params_from_dict,
    Run: _run_from_dict,
    TrainedPipeline: _trained_pipeline_from_dict,
}


def document_from_dict(doc_type: type, d: dict) -> ArtifactDocument:
    try:
        parser = DOCUMENT_PARSERS[doc_type]
    except KeyError:
        raise InvalidInputError(f"unknown document type {doc_type!r}") from None
    if not isinstance(d, dict):
        raise InvalidInputError("document body must be a JSON object")
    return parser(d)
