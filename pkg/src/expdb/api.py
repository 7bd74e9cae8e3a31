"""REST surface over the store and analysis engines.

JSON bodies, standard verbs: CRUD per artifact kind (kebab-case plural
paths), content-addressed object upload/download, ranking and similarity
queries, experiment run retrieval, and the recommendation / variability /
regret analysis endpoints.  Errors come back as a machine-readable body:
``{"status", "code", "message", "validation"}``.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import metamodel as mm
from . import metalearn, metrics, stats
from .errors import (
    ConflictError,
    ContractViolationError,
    IntegrityError,
    InvalidInputError,
    InvalidStateError,
    MissingMetricError,
    NotFoundError,
    ValidationError,
)
from .ingest import records_for_datasets
from .store import DOCUMENT_TYPES, ArtifactKind, ArtifactStore, ExperimentKey, QueryFilter

#: URL path segment per artifact kind.
KIND_PATHS = {
    "datasets": ArtifactKind.DATASET,
    "dataset-params": ArtifactKind.DATASET_PARAMS,
    "pipelines": ArtifactKind.PIPELINE,
    "pipeline-params": ArtifactKind.PIPELINE_PARAMS,
    "runs": ArtifactKind.RUN,
    "trained-pipelines": ArtifactKind.TRAINED_PIPELINE,
}


def _error_response(
    status: int, code: str, message: str, validation: dict | None = None
) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"status": status, "code": code, "message": message, "validation": validation},
    )


def _resolve_kind(kind_path: str) -> ArtifactKind:
    kind = KIND_PATHS.get(kind_path)
    if kind is None:
        raise NotFoundError(f"unknown artifact kind {kind_path!r}")
    return kind


def create_app(store: ArtifactStore) -> FastAPI:
    app = FastAPI(title="expdb", version="0.1.0")

    # -- error mapping ------------------------------------------------------

    @app.exception_handler(ValidationError)
    async def _validation(_, exc: ValidationError):
        return _error_response(422, "validation", str(exc), exc.report.to_dict())

    @app.exception_handler(NotFoundError)
    async def _not_found(_, exc: NotFoundError):
        return _error_response(404, "not_found", str(exc))

    @app.exception_handler(ConflictError)
    async def _conflict(_, exc: ConflictError):
        return _error_response(409, "conflict", str(exc))

    @app.exception_handler(IntegrityError)
    async def _integrity(_, exc: IntegrityError):
        return _error_response(409, "integrity", str(exc))

    @app.exception_handler(InvalidInputError)
    async def _bad_request(_, exc: InvalidInputError):
        return _error_response(400, "bad_request", str(exc))

    @app.exception_handler(MissingMetricError)
    async def _missing_metric(_, exc: MissingMetricError):
        return _error_response(400, "bad_request", str(exc))

    @app.exception_handler(InvalidStateError)
    async def _invalid_state(_, exc: InvalidStateError):
        return _error_response(409, "conflict", str(exc))

    @app.exception_handler(ContractViolationError)
    async def _contract(_, exc: ContractViolationError):
        return _error_response(400, "bad_request", str(exc))

    @app.exception_handler(StarletteHTTPException)
    async def _http(_, exc: StarletteHTTPException):
        code = {404: "not_found", 405: "bad_request", 409: "conflict"}.get(
            exc.status_code, "bad_request"
        )
        return _error_response(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(_, exc: RequestValidationError):
        return _error_response(400, "bad_request", str(exc))

    # -- helpers -------------------------------------------------------------

    def _records(dataset_ids: list[str], metric: str) -> list[metrics.ResultRecord]:
        return records_for_datasets(store, dataset_ids, metric)

    def _dataset_ids_with_runs() -> list[str]:
        ids = set()
        for run in store.runs_for_experiment(ExperimentKey()):
            ids.add(run.dataset_id)
        return sorted(ids)

    def _corpus_matrix(metric: str, source: str) -> metalearn.ResultsMatrix:
        dataset_ids = _dataset_ids_with_runs()
        if not dataset_ids:
            raise InvalidStateError("the store holds no runs to learn from")
        meta = {
            d: store.get_artifact(ArtifactKind.DATASET, d).meta_features for d in dataset_ids
        }
        records = _records(dataset_ids, metric)
        return metalearn.build_results_matrix(records, source, meta)

    # -- objects (before the generic kind routes) ----------------------------

    @app.post("/v1/objects", status_code=201)
    async def put_object(request: Request):
        data = await request.body()
        ref = store.put_object(data)
        return {"hash": ref.hash, "size_bytes": ref.size_bytes}

    @app.get("/v1/objects/{digest}")
    def get_object(digest: str):
        return Response(content=store.fetch_object(digest), media_type="application/octet-stream")

    # -- dataset analysis routes ----------------------------------------------

    @app.get("/v1/datasets/{dataset_id}/top-pipelines")
    def top_pipelines(
        dataset_id: str,
        metric: str = metrics.NORMALIZED_ACCURACY,
        source: str = metrics.MEAN_AGGREGATED,
        n: int = 10,
        dataset_params: str | None = None,
    ):
        store.get_artifact(ArtifactKind.DATASET, dataset_id)
        ranking = metrics.rank_entities(
            _records([dataset_id], metric),
            dataset_id,
            metrics.PIPELINE_LEVEL,
            metric,
            source=source,
            top_n=n,
            scope_dataset_params_id=dataset_params,
        )
        return metrics.ranking_to_dict(ranking)

    @app.get("/v1/datasets/{dataset_id}/top-params")
    def top_params(
        dataset_id: str,
        metric: str = metrics.NORMALIZED_ACCURACY,
        source: str = metrics.MEAN_AGGREGATED,
        n: int = 10,
        dataset_params: str | None = None,
    ):
        store.get_artifact(ArtifactKind.DATASET, dataset_id)
        ranking = metrics.rank_entities(
            _records([dataset_id], metric),
            dataset_id,
            metrics.PARAM_LEVEL,
            metric,
            source=source,
            top_n=n,
            scope_dataset_params_id=dataset_params,
        )
        return metrics.ranking_to_dict(ranking)

    @app.get("/v1/datasets/{dataset_id}/similar")
    def similar_datasets(dataset_id: str, k: int = 5):
        query = store.get_artifact(ArtifactKind.DATASET, dataset_id)
        others = [
            (other_id, store.get_artifact(ArtifactKind.DATASET, other_id))
            for other_id in store.list_ids(ArtifactKind.DATASET)
            if other_id != dataset_id
        ]
        if len(others) < 1:
            return {"dataset_id": dataset_id, "neighbors": []}
        corpus = [query.meta_features] + [d.meta_features for _, d in others]
        if len(corpus) < 2:
            raise InvalidStateError("similarity needs at least 2 stored datasets")
        standardizer = metalearn.Standardizer.fit(corpus)
        scored = [
            (other_id, metalearn.dataset_distance(query.meta_features, d.meta_features, standardizer))
            for other_id, d in others
        ]
        scored.sort(key=lambda e: (e[1], e[0]))
        return {
            "dataset_id": dataset_id,
            "neighbors": [
                {"dataset_id": other_id, "distance": dist} for other_id, dist in scored[:k]
            ],
        }

    @app.get("/v1/pipelines/{pipeline_id}/best-params")
    def best_params(
        pipeline_id: str, metric: str = metrics.NORMALIZED_ACCURACY, n: int = 10
    ):
        store.get_artifact(ArtifactKind.PIPELINE, pipeline_id)
        runs = store.runs_for_experiment(ExperimentKey(pipeline_id=pipeline_id))
        rows = metrics.aggregate_metric(runs, metric, ["pipeline_params_id"])
        rows.sort(key=lambda r: (-r.mean, r.key.pipeline_params_id))
        return {
            "pipeline_id": pipeline_id,
            "metric_name": metric,
            "entries": [
                {
                    "pipeline_params_id": r.key.pipeline_params_id,
                    "mean": r.mean,
                    "std": r.std,
                    "count": r.count,
                }
                for r in rows[:n]
            ],
        }

    # -- experiment runs -------------------------------------------------------

    @app.get("/v1/experiments/runs")
    def experiment_runs(
        dataset: str | None = None,
        pipeline: str | None = None,
        pipeline_params: str | None = None,
        dataset_params: str | None = None,
        input_trained_pipeline: str | None = None,
    ):
        key = ExperimentKey(
            dataset_id=dataset,
            dataset_params_id=dataset_params,
            pipeline_id=pipeline,
            pipeline_params_id=pipeline_params,
            input_trained_pipeline_id=input_trained_pipeline,
        )
        return [mm.document_to_dict(run) for run in store.runs_for_experiment(key)]

    # -- recommendation ---------------------------------------------------------

    @app.post("/v1/recommend")
    async def recommend(request: Request):
        body = await _json_body(request)
        k = _int_field(body, "k", 5)
        budget = _int_field(body, "budget", 10)
        metric = body.get("metric", metrics.NORMALIZED_ACCURACY)
        source = body.get("source", metrics.MEAN_AGGREGATED)
        query = _query_meta_features(body)
        corpus = _corpus_matrix(metric, source)
        if corpus.n_datasets < max(2, k):
            raise InvalidStateError(
                f"recommendation needs at least {max(2, k)} stored datasets with runs"
            )
        plan = metalearn.knd_recommend(query, corpus, k=k, budget=budget)
        proposals = []
        while True:
            config = plan.next()
            if config is None:
                break
            proposals.append(config)
        scores = metalearn.expected_scores(plan, corpus, proposals)
        return [
            {
                "pipeline_id": pipeline_id,
                "pipeline_params_id": params_id,
                "expected_score": score,
            }
            for (pipeline_id, params_id), score in zip(proposals, scores)
        ]

    # -- analysis ---------------------------------------------------------------

    @app.post("/v1/analysis/variability")
    async def analysis_variability(request: Request):
        body = await _json_body(request)
        metric = body.get("metric", metrics.NORMALIZED_ACCURACY)
        mode = body.get("mode", stats.DATASET_CONFIGS)
        alpha = float(body.get("alpha", 0.05))
        top_ns = [int(n) for n in body.get("top_ns", stats.DEFAULT_TOP_NS)]
        source = body.get("source", metrics.MEAN_AGGREGATED)
        dataset_ids = body.get("dataset_ids") or _dataset_ids_with_runs()
        external = body.get("external")
        summary = stats.variability_report(
            _records(dataset_ids, metric),
            dataset_ids,
            metric,
            alpha=alpha,
            top_ns=top_ns,
            mode=mode,
            external=external,
            source=source,
        )
        return summary.to_dict()

    @app.post("/v1/analysis/regret")
    async def analysis_regret(request: Request):
        body = await _json_body(request)
        metric = body.get("metric", metrics.NORMALIZED_ACCURACY)
        recommender = body.get("recommender", metalearn.KND)
        T = _int_field(body, "T", metalearn.DEFAULT_ITERATIONS)
        k = _int_field(body, "k", 5)
        dataset_ids = body.get("dataset_ids") or _dataset_ids_with_runs()
        if not dataset_ids:
            raise InvalidStateError("the store holds no runs to evaluate")
        meta = {
            d: store.get_artifact(ArtifactKind.DATASET, d).meta_features for d in dataset_ids
        }
        comparison = metalearn.compare_sources(
            _records(dataset_ids, metric), meta, recommender=recommender, T=T, k=k
        )
        return {
            "recommender": comparison.recommender,
            "iterations": comparison.iterations,
            "per_dataset": {
                d: {src: curve.values for src, curve in curves.items()}
                for d, curves in comparison.per_dataset.items()
            },
            "mean_curves": comparison.mean_curves,
            "excluded": [{"dataset_id": d, "reason": r} for d, r in comparison.excluded],
        }

    # -- generic CRUD (registered last so specific routes win) -------------------

    @app.post("/v1/{kind_path}", status_code=201)
    async def create_artifact(kind_path: str, request: Request):
        kind = _resolve_kind(kind_path)
        body = await _json_body(request)
        doc = mm.document_from_dict(DOCUMENT_TYPES[kind], body)
        return {"id": store.put_artifact(kind, doc)}

    @app.get("/v1/{kind_path}")
    def list_artifacts(
        kind_path: str,
        tag: list[str] = Query(default=[]),
        author: str | None = None,
    ):
        kind = _resolve_kind(kind_path)
        if tag or author is not None:
            flt = QueryFilter(tags=list(tag), author=author)
        else:
            flt = QueryFilter.match_all()
        return [mm.document_to_dict(doc) for doc in store.query_artifacts(kind, flt)]

    @app.get("/v1/{kind_path}/{doc_id}")
    def get_artifact(kind_path: str, doc_id: str):
        kind = _resolve_kind(kind_path)
        return mm.document_to_dict(store.get_artifact(kind, doc_id))

    @app.put("/v1/{kind_path}/{doc_id}")
    async def replace_artifact(kind_path: str, doc_id: str, request: Request):
        kind = _resolve_kind(kind_path)
        body = await _json_body(request)
        doc = mm.document_from_dict(DOCUMENT_TYPES[kind], body)
        store.replace_artifact(kind, doc_id, doc)
        return {"id": doc_id}

    @app.delete("/v1/{kind_path}/{doc_id}", status_code=204)
    def delete_artifact(kind_path: str, doc_id: str):
        kind = _resolve_kind(kind_path)
        store.delete_artifact(kind, doc_id)
        return Response(status_code=204)

    return app


async def _json_body(request: Request) -> dict[str, Any]:
    try:
        body = await request.json()
    except Exception:
        raise InvalidInputError("request body must be valid JSON") from None
    if not isinstance(body, dict):
        raise InvalidInputError("request body must be a JSON object")
    return body


def _int_field(body: dict, name: str, default: int) -> int:
    try:
        return int(body.get(name, default))
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name} must be an integer") from None


def _query_meta_features(body: dict) -> mm.MetaFeatures:
    """The recommendation query: either explicit meta-features or a table
    from which they are extracted server-side."""
    if "meta_features" in body:
        raw = body["meta_features"]
        if not isinstance(raw, dict):
            raise ValidationError(_report("meta_features", "must be an object"))
        return mm._meta_features_from_dict(raw)
    if "table" in body:
        raw = body["table"]
        if not isinstance(raw, dict):
            raise ValidationError(_report("table", "must be an object"))
        try:
            table = mm.Table(
                name=raw.get("name", "query"),
                columns=[
                    mm.Column(c.get("name", ""), c.get("kind", "numeric"), list(c.get("values", [])))
                    for c in raw.get("columns", [])
                ],
                target_column=raw.get("target_column"),
            )
            return mm.extract_meta_features(table)
        except InvalidInputError as exc:
            raise ValidationError(_report("table", str(exc))) from None
    raise ValidationError(_report("meta_features", "request needs meta_features or a table"))


def _report(path: str, message: str) -> mm.ValidationReport:
    report = mm.ValidationReport()
    report.add(path, message)
    return report
