"""Shared builders for tables, stored corpora, and synthetic result records."""

from __future__ import annotations

import random
import uuid

from expdb import (
    ArtifactKind,
    ArtifactStore,
    Column,
    CommonHeader,
    Dataset,
    DatasetParameters,
    EnvironmentInfo,
    MetaFeatures,
    Pipeline,
    PipelineParameters,
    PipelineStep,
    ResultRecord,
    Run,
    Table,
    infer_data_schema,
)

AUTHORS = ["tester"]


def header(doc_id: str | None = None, tags: list[str] | None = None) -> CommonHeader:
    return CommonHeader.create(authors=AUTHORS, tags=tags or [], id=doc_id)


def random_table(
    rng: random.Random,
    n_rows: int,
    n_classes: int,
    n_numeric: int = 2,
    name: str = "tbl",
) -> Table:
    """Random numeric-feature table with a categorical target; every class is
    guaranteed at least one row."""
    labels = [f"c{i}" for i in range(n_classes)]
    target = labels * (n_rows // n_classes) + labels[: n_rows % n_classes]
    rng.shuffle(target)
    columns = [
        Column(f"x{j}", "numeric", [rng.gauss(0, 1) for _ in range(n_rows)])
        for j in range(n_numeric)
    ]
    columns.append(Column("label", "categorical", target))
    return Table(name=name, columns=columns, target_column="label")


def simple_table() -> Table:
    return Table(
        name="simple",
        columns=[
            Column("age", "numeric", [20.0, 35.0, 50.0, 41.0, 28.0]),
            Column("city", "categorical", ["b", "a", "b", "a", "a"]),
            Column("note", "text", ["one", "two", "three", "four", "five"]),
            Column("label", "categorical", ["y", "n", "y", "n", "y"]),
        ],
        target_column="label",
    )


def put_dataset(store: ArtifactStore, table: Table, doc_id: str | None = None) -> str:
    from expdb import extract_meta_features

    dataset = Dataset(
        header=header(doc_id),
        data_schema=infer_data_schema(table),
        meta_features=extract_meta_features(table),
    )
    return store.put_artifact(ArtifactKind.DATASET, dataset)


def put_pipeline(store: ArtifactStore, doc_id: str | None = None) -> str:
    pipeline = Pipeline(
        header=header(doc_id),
        task_type="classification",
        pipeline_type="toy",
        steps=[
            PipelineStep("scale", "standardize", "preprocessor"),
            PipelineStep("fit", "decision_tree", "estimator"),
        ],
    )
    return store.put_artifact(ArtifactKind.PIPELINE, pipeline)


def put_pipeline_params(store: ArtifactStore, pipeline_id: str) -> str:
    return store.put_artifact(
        ArtifactKind.PIPELINE_PARAMS,
        PipelineParameters(header=header(), pipeline_id=pipeline_id, values={}),
    )


def put_split(
    store: ArtifactStore, dataset_id: str, fold_index: int = 0, n_folds: int = 5
) -> str:
    return store.put_artifact(
        ArtifactKind.DATASET_PARAMS,
        DatasetParameters(
            header=header(),
            dataset_id=dataset_id,
            split_method="stratified_kfold",
            train_ratio=1 - 1 / n_folds,
            n_folds=n_folds,
            fold_index=fold_index,
            seed=7,
        ),
    )


def put_run(
    store: ArtifactStore,
    dataset_id: str,
    dataset_params_id: str,
    pipeline_id: str,
    pipeline_params_id: str,
    metrics: dict[str, float],
    repeat_index: int = 0,
) -> str:
    return store.put_artifact(
        ArtifactKind.RUN,
        Run(
            header=header(),
            run_kind="train",
            dataset_id=dataset_id,
            dataset_params_id=dataset_params_id,
            pipeline_id=pipeline_id,
            pipeline_params_id=pipeline_params_id,
            metrics=metrics,
            environment=EnvironmentInfo(software={"py": "3.10"}, hardware="cpu"),
            repeat_index=repeat_index,
        ),
    )


def record(
    dataset: str,
    pipeline: str,
    params: str,
    fold: int,
    repeat: int,
    value: float,
) -> ResultRecord:
    """Synthetic analysis record; the split id encodes the fold."""
    return ResultRecord(
        dataset_id=dataset,
        pipeline_id=pipeline,
        pipeline_params_id=params,
        dataset_params_id=f"{dataset}-fold{fold}",
        fold_index=fold,
        repeat_index=repeat,
        value=value,
    )


def meta_features_vector(rng: random.Random) -> MetaFeatures:
    return MetaFeatures(
        n_instances=float(rng.randint(20, 500)),
        n_features=10.0,
        n_numeric=8.0,
        n_categorical=2.0,
        n_classes=float(rng.randint(2, 5)),
        class_entropy=rng.uniform(0.1, 2.0),
        majority_class_ratio=rng.uniform(0.3, 0.9),
        missing_fraction=rng.uniform(0.0, 0.2),
        mean_feature_skewness=rng.gauss(0, 1),
        mean_feature_kurtosis=rng.gauss(0, 1),
    )


def fresh_uuid() -> str:
    return str(uuid.uuid4())
