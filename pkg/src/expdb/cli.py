"""Command-line interface: serve the REST API, ingest corpora, materialise
splits, and run the ranking / variability / regret analyses against a store
directory (``--root`` or the LDE_ROOT environment variable)."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import metalearn, metrics, splitting, stats
from . import metamodel as mm
from .ingest import (
    ingest_meta_features_csv,
    ingest_results_csv,
    load_table_csv,
    records_for_datasets,
)
from .store import ArtifactKind, ArtifactStore, ExperimentKey

_root_option = click.option(
    "--root",
    "-r",
    envvar="LDE_ROOT",
    default="./lde-store",
    show_default=True,
    help="Store directory (env: LDE_ROOT).",
)


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


def _dataset_ids(store: ArtifactStore, dataset: tuple[str, ...]) -> list[str]:
    if dataset:
        return list(dataset)
    return sorted({r.dataset_id for r in store.runs_for_experiment(ExperimentKey())})


@click.group()
def main() -> None:
    """Experiment-metadata store and analysis engine."""


@main.command()
@_root_option
@click.option(
    "--bind",
    envvar="LDE_BIND",
    default="127.0.0.1:8080",
    show_default=True,
    help="host:port to listen on (env: LDE_BIND).",
)
def serve(root: str, bind: str) -> None:
    """Run the REST API server."""
    import uvicorn

    from .api import create_app

    host, _, port = bind.partition(":")
    app = create_app(ArtifactStore(root))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")


@main.group()
def ingest() -> None:
    """Ingest external files into the store."""


@ingest.command("results")
@_root_option
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--rename-metric",
    "renames",
    multiple=True,
    help="OLD=NEW metric name mapping; repeatable.",
)
def ingest_results(root: str, path: str, renames: tuple[str, ...]) -> None:
    """Ingest a long-format results CSV
    (dataset_id,pipeline_id,pipeline_params_id,fold_index,repeat_index,metric_name,value)."""
    mapping = {}
    for item in renames:
        old, _, new = item.partition("=")
        if not old or not new:
            raise click.BadParameter(f"expected OLD=NEW, got {item!r}")
        mapping[old] = new
    report = ingest_results_csv(ArtifactStore(root), path, metric_mapping=mapping)
    click.echo(json.dumps(report.to_dict(), indent=2))


@ingest.command("meta-features")
@_root_option
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def ingest_meta_features(root: str, path: str) -> None:
    """Ingest a dataset meta-feature sidecar CSV (dataset_id,feature,value)."""
    report = ingest_meta_features_csv(ArtifactStore(root), path)
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command()
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, help="Target column for stratification.")
@click.option("--k", default=5, show_default=True, help="Number of folds.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write fold documents here (JSON).")
@click.option("--dataset-id", default="", help="Dataset id to link the folds to.")
def split(csv_path: str, target: str, k: int, seed: int, out: str | None, dataset_id: str) -> None:
    """Materialise deterministic stratified folds for a local CSV table."""
    table = load_table_csv(csv_path, target_column=target)
    folds = splitting.make_stratified_folds(table, k=k, seed=seed, dataset_id=dataset_id)
    payload = json.dumps([mm.document_to_dict(f) for f in folds], indent=2, sort_keys=True)
    _write_out(payload + "\n", out)


@main.command()
@_root_option
@click.option("--dataset", required=True, help="Dataset id to rank for.")
@click.option(
    "--level",
    type=click.Choice([metrics.PIPELINE_LEVEL, metrics.PARAM_LEVEL]),
    default=metrics.PIPELINE_LEVEL,
    show_default=True,
)
@click.option("--metric", default=metrics.NORMALIZED_ACCURACY, show_default=True)
@click.option(
    "--source",
    type=click.Choice(metrics.RESULT_SOURCES),
    default=metrics.MEAN_AGGREGATED,
    show_default=True,
)
@click.option("--n", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Unused; analyses are deterministic.")
@click.option("--out", type=click.Path(), default=None)
def rank(root, dataset, level, metric, source, n, seed, out) -> None:
    """Rank pipelines or parameter configurations for a dataset."""
    store = ArtifactStore(root)
    records = records_for_datasets(store, [dataset], metric)
    ranking = metrics.rank_entities(
        records, dataset, level, metric, source=source, top_n=n
    )
    _write_out(metrics.ranking_to_csv(ranking), out)


@main.command()
@_root_option
@click.option(
    "--mode",
    type=click.Choice(stats.VARIABILITY_MODES),
    default=stats.DATASET_CONFIGS,
    show_default=True,
)
@click.option("--metric", default=metrics.NORMALIZED_ACCURACY, show_default=True)
@click.option(
    "--source",
    type=click.Choice(metrics.RESULT_SOURCES),
    default=metrics.MEAN_AGGREGATED,
    show_default=True,
)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--top-ns", default="10,20,50,100", show_default=True)
@click.option("--dataset", multiple=True, help="Dataset ids; defaults to all with runs.")
@click.option(
    "--external",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="External results CSV (dataset_id,entity_id,score) for cross-corpus mode.",
)
@click.option("--seed", default=0, show_default=True, help="Unused; analyses are deterministic.")
@click.option("--out", type=click.Path(), default=None)
def variability(root, mode, metric, source, alpha, top_ns, dataset, external, seed, out) -> None:
    """Summarise how significantly rankings differ across configurations."""
    store = ArtifactStore(root)
    dataset_ids = _dataset_ids(store, dataset)
    external_table = None
    if external:
        external_table = {}
        import csv as _csv

        with open(external, newline="", encoding="utf-8") as fh:
            for row in _csv.DictReader(fh):
                external_table.setdefault(row["dataset_id"], {})[row["entity_id"]] = float(
                    row["score"]
                )
    summary = stats.variability_report(
        records_for_datasets(store, dataset_ids, metric),
        dataset_ids,
        metric,
        alpha=alpha,
        top_ns=[int(n) for n in top_ns.split(",")],
        mode=mode,
        external=external_table,
        source=source,
    )
    _write_out(summary.to_csv(), out)


@main.command()
@_root_option
@click.option(
    "--recommender",
    type=click.Choice(metalearn.RECOMMENDERS),
    default=metalearn.KND,
    show_default=True,
)
@click.option("--metric", default=metrics.NORMALIZED_ACCURACY, show_default=True)
@click.option(
    "--source",
    type=click.Choice(("both",) + metrics.RESULT_SOURCES),
    default="both",
    show_default=True,
    help="Curves to include in the report.",
)
@click.option("--t", "iterations", default=metalearn.DEFAULT_ITERATIONS, show_default=True)
@click.option("--k", default=5, show_default=True, help="Neighbours for the kND recommender.")
@click.option("--seed", default=0, show_default=True, help="Unused; analyses are deterministic.")
@click.option("--out", type=click.Path(), default=None)
def regret(root, recommender, metric, source, iterations, k, seed, out) -> None:
    """Leave-one-dataset-out regret curves under both result sources."""
    store = ArtifactStore(root)
    dataset_ids = _dataset_ids(store, ())
    meta = {d: store.get_artifact(ArtifactKind.DATASET, d).meta_features for d in dataset_ids}
    comparison = metalearn.compare_sources(
        records_for_datasets(store, dataset_ids, metric),
        meta,
        recommender=recommender,
        T=iterations,
        k=k,
    )
    if source != "both":
        for curves in comparison.per_dataset.values():
            for other in [s for s in list(curves) if s != source]:
                del curves[other]
    _write_out(metalearn.regret_report_csv(comparison), out)


@main.command()
@_root_option
@click.option("--meta-features", "mf_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with the query dataset's meta-features.")
@click.option("--dataset", default=None, help="Use a stored dataset's meta-features instead.")
@click.option("--metric", default=metrics.NORMALIZED_ACCURACY, show_default=True)
@click.option(
    "--source",
    type=click.Choice(metrics.RESULT_SOURCES),
    default=metrics.MEAN_AGGREGATED,
    show_default=True,
)
@click.option("--k", default=5, show_default=True)
@click.option("--budget", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Unused; analyses are deterministic.")
@click.option("--out", type=click.Path(), default=None)
def recommend(root, mf_path, dataset, metric, source, k, budget, seed, out) -> None:
    """Recommend configurations for a (possibly unseen) dataset."""
    store = ArtifactStore(root)
    if (mf_path is None) == (dataset is None):
        raise click.UsageError("provide exactly one of --meta-features or --dataset")
    if mf_path:
        query = mm._meta_features_from_dict(json.loads(Path(mf_path).read_text()))
    else:
        query = store.get_artifact(ArtifactKind.DATASET, dataset).meta_features
    dataset_ids = _dataset_ids(store, ())
    if not dataset_ids:
        click.echo("the store holds no runs to learn from", err=True)
        sys.exit(1)
    meta = {d: store.get_artifact(ArtifactKind.DATASET, d).meta_features for d in dataset_ids}
    corpus = metalearn.build_results_matrix(
        records_for_datasets(store, dataset_ids, metric), source, meta
    )
    plan = metalearn.knd_recommend(query, corpus, k=min(k, corpus.n_datasets), budget=budget)
    proposals = []
    while (config := plan.next()) is not None:
        proposals.append(config)
    scores = metalearn.expected_scores(plan, corpus, proposals)
    payload = json.dumps(
        [
            {"pipeline_id": p, "pipeline_params_id": pp, "expected_score": s}
            for (p, pp), s in zip(proposals, scores)
        ],
        indent=2,
    )
    _write_out(payload + "\n", out)


if __name__ == "__main__":
    main()
