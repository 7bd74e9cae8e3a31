"""File-backed artifact store with referential integrity and content-addressed
binary objects.

Documents live under ``<root>/<kind>/<id>.json`` (UTF-8 JSON, sorted keys);
binary objects under ``<root>/objects/<hash[:2]>/<hash>``.  Writes are atomic
(write-temp-then-rename) and serialised by an in-process lock; an in-memory
mirror of the documents plus a link index keeps queries and delete checks
fast, with the files on disk remaining the source of truth across restarts.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import metamodel as mm
from .errors import (
    ConflictError,
    IntegrityError,
    InvalidInputError,
    NotFoundError,
    ValidationError,
)
from .metamodel import ObjectRef, ValidationReport

__all__ = [
    "ArtifactKind",
    "ObjectRef",
    "ExperimentKey",
    "QueryFilter",
    "ArtifactStore",
]


class ArtifactKind(str, Enum):
    DATASET = "dataset"
    DATASET_PARAMS = "dataset_params"
    PIPELINE = "pipeline"
    PIPELINE_PARAMS = "pipeline_params"
    RUN = "run"
    TRAINED_PIPELINE = "trained_pipeline"


DOCUMENT_TYPES = {
    ArtifactKind.DATASET: mm.Dataset,
    ArtifactKind.DATASET_PARAMS: mm.DatasetParameters,
    ArtifactKind.PIPELINE: mm.Pipeline,
    ArtifactKind.PIPELINE_PARAMS: mm.PipelineParameters,
    ArtifactKind.RUN: mm.Run,
    ArtifactKind.TRAINED_PIPELINE: mm.TrainedPipeline,
}

# (attribute, target kind, required) triples per kind; the link graph of the
# six artifact types.
LINK_FIELDS: dict[ArtifactKind, list[tuple[str, ArtifactKind, bool]]] = {
    ArtifactKind.DATASET: [],
    ArtifactKind.DATASET_PARAMS: [("dataset_id", ArtifactKind.DATASET, True)],
    ArtifactKind.PIPELINE: [],
    ArtifactKind.PIPELINE_PARAMS: [("pipeline_id", ArtifactKind.PIPELINE, True)],
    ArtifactKind.RUN: [
        ("dataset_id", ArtifactKind.DATASET, True),
        ("dataset_params_id", ArtifactKind.DATASET_PARAMS, True),
        ("pipeline_id", ArtifactKind.PIPELINE, True),
        ("pipeline_params_id", ArtifactKind.PIPELINE_PARAMS, True),
        ("input_trained_pipeline_id", ArtifactKind.TRAINED_PIPELINE, False),
        ("output_trained_pipeline_id", ArtifactKind.TRAINED_PIPELINE, False),
    ],
    ArtifactKind.TRAINED_PIPELINE: [("origin_run_id", ArtifactKind.RUN, True)],
}

# Optional links that may be set once after creation (a training run gains
# its output trained pipeline only after that artifact exists).
_SETTABLE_ONCE = {(ArtifactKind.RUN, "input_trained_pipeline_id"),
                  (ArtifactKind.RUN, "output_trained_pipeline_id")}


@dataclass
class ExperimentKey:
    """Grouping key for runs; None fields act as wildcards."""

    dataset_id: str | None = None
    dataset_params_id: str | None = None
    pipeline_id: str | None = None
    pipeline_params_id: str | None = None
    input_trained_pipeline_id: str | None = None

    def matches(self, run: mm.Run) -> bool:
        for name in (
            "dataset_id",
            "dataset_params_id",
            "pipeline_id",
            "pipeline_params_id",
            "input_trained_pipeline_id",
        ):
            want = getattr(self, name)
            if want is not None and getattr(run, name) != want:
                return False
        return True


@dataclass
class QueryFilter:
    """Conjunctive document filter: all tags must be present, the author must
    appear, and every link constraint must hold.  Construct with
    ``QueryFilter.match_all()`` for an explicit no-op filter."""

    tags: list[str] = field(default_factory=list)
    author: str | None = None
    links: dict[str, str] = field(default_factory=dict)
    all: bool = False

    @classmethod
    def match_all(cls) -> "QueryFilter":
        return cls(all=True)

    def validate(self) -> None:
        if not (self.all or self.tags or self.author is not None or self.links):
            raise InvalidInputError(
                "query filter needs at least one clause or an explicit match-all"
            )

    def matches(self, doc: mm.ArtifactDocument) -> bool:
        header = doc.header
        if self.tags and not set(self.tags) <= set(header.tags):
            return False
        if self.author is not None and self.author not in header.authors:
            return False
        for attr, want in self.links.items():
            if getattr(doc, attr, None) != want:
                return False
        return True


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ArtifactStore:
    """Single-writer, multi-reader document store for the six artifact kinds.

    Deletion is restrict, never cascade: an artifact with inbound references
    cannot be removed.  Link fields are immutable after creation, except the
    optional trained-pipeline links of a run which may be set once.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.RLock()
        self._docs: dict[ArtifactKind, dict[str, mm.ArtifactDocument]] = {
            kind: {} for kind in ArtifactKind
        }
        self._inbound: dict[tuple[ArtifactKind, str], set[tuple[ArtifactKind, str]]] = {}
        for kind in ArtifactKind:
            (self.root / kind.value).mkdir(parents=True, exist_ok=True)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)
        self._load()

    # -- loading ----------------------------------------------------------

    def _load(self) -> None:
        for kind in ArtifactKind:
            doc_type = DOCUMENT_TYPES[kind]
            for path in sorted((self.root / kind.value).glob("*.json")):
                with open(path, encoding="utf-8") as fh:
                    doc = mm.document_from_dict(doc_type, json.load(fh))
                self._docs[kind][doc.header.id] = doc
        for kind in ArtifactKind:
            for doc in self._docs[kind].values():
                self._index_links(kind, doc, add=True)

    def _index_links(self, kind: ArtifactKind, doc: mm.ArtifactDocument, add: bool) -> None:
        me = (kind, doc.header.id)
        for attr, target_kind, _ in LINK_FIELDS[kind]:
            target_id = getattr(doc, attr)
            if not target_id:
                continue
            key = (target_kind, target_id)
            if add:
                self._inbound.setdefault(key, set()).add(me)
            else:
                refs = self._inbound.get(key)
                if refs:
                    refs.discard(me)
                    if not refs:
                        del self._inbound[key]

    # -- helpers ----------------------------------------------------------

    def _doc_path(self, kind: ArtifactKind, doc_id: str) -> Path:
        return self.root / kind.value / f"{doc_id}.json"

    def _write_doc(self, kind: ArtifactKind, doc: mm.ArtifactDocument) -> None:
        payload = json.dumps(
            mm.document_to_dict(doc), sort_keys=True, indent=2, ensure_ascii=False
        )
        _atomic_write(self._doc_path(kind, doc.header.id), payload.encode("utf-8"))

    def _check_links(self, kind: ArtifactKind, doc: mm.ArtifactDocument) -> None:
        for attr, target_kind, required in LINK_FIELDS[kind]:
            target_id = getattr(doc, attr)
            if not target_id:
                if required:
                    raise IntegrityError(f"{attr} is required for {kind.value} documents")
                continue
            if target_id not in self._docs[target_kind]:
                raise IntegrityError(
                    f"{attr} references missing {target_kind.value} {target_id}"
                )
        # Semantic rules that need the linked documents.
        if isinstance(doc, mm.PipelineParameters):
            pipeline = self._docs[ArtifactKind.PIPELINE][doc.pipeline_id]
            report = mm.check_param_values(doc, pipeline.parameter_schema)
            if not report.ok:
                raise ValidationError(report, "pipeline parameter values violate schema")
        elif isinstance(doc, mm.TrainedPipeline):
            run = self._docs[ArtifactKind.RUN][doc.origin_run_id]
            if run.run_kind != "train":
                raise IntegrityError(
                    f"origin_run_id {doc.origin_run_id} is not a train run"
                )
            for ref in doc.asset_refs:
                if not self._object_path(ref.hash).exists():
                    raise IntegrityError(f"asset {ref.hash} not present in object storage")
        elif isinstance(doc, mm.DatasetParameters):
            dataset = self._docs[ArtifactKind.DATASET][doc.dataset_id]
            n = dataset.meta_features.n_instances
            if n is not None and doc.train_indices is not None and doc.test_indices is not None:
                report = ValidationReport()
                for name, indices in (
                    ("train_indices", doc.train_indices),
                    ("test_indices", doc.test_indices),
                ):
                    out = [i for i in indices if i >= n]
                    if out:
                        report.add(name, f"indices {out[:5]} outside dataset bounds [0, {int(n)})")
                if not report.ok:
                    raise ValidationError(report, "split indices outside dataset bounds")

    # -- CRUD -------------------------------------------------------------

    def put_artifact(self, kind: ArtifactKind, doc: mm.ArtifactDocument) -> str:
        """Validate and durably store a document; returns its id.

        A missing header id gets a fresh UUID; a caller-supplied id that is
        already present raises ConflictError.
        """
        kind = ArtifactKind(kind)
        if not isinstance(doc, DOCUMENT_TYPES[kind]):
            raise InvalidInputError(
                f"expected a {DOCUMENT_TYPES[kind].__name__} for kind {kind.value}"
            )
        with self._lock:
            doc = copy.deepcopy(doc)
            if not doc.header.id:
                doc.header.id = str(uuid.uuid4())
            if not doc.header.created_at:
                doc.header.created_at = mm.utc_now_iso()
            report = mm.validate_document(doc)
            if not report.ok:
                raise ValidationError(report)
            if doc.header.id in self._docs[kind]:
                raise ConflictError(f"{kind.value} {doc.header.id} already exists")
            self._check_links(kind, doc)
            self._write_doc(kind, doc)
            self._docs[kind][doc.header.id] = doc
            self._index_links(kind, doc, add=True)
            return doc.header.id

    def get_artifact(self, kind: ArtifactKind, doc_id: str) -> mm.ArtifactDocument:
        kind = ArtifactKind(kind)
        with self._lock:
            doc = self._docs[kind].get(doc_id)
            if doc is None:
                raise NotFoundError(f"no {kind.value} with id {doc_id}")
            return copy.deepcopy(doc)

    def replace_artifact(
        self, kind: ArtifactKind, doc_id: str, doc: mm.ArtifactDocument
    ) -> None:
        """Validated replace keeping the same id.  Link fields must not
        change, except optional run links that were previously unset."""
        kind = ArtifactKind(kind)
        with self._lock:
            old = self._docs[kind].get(doc_id)
            if old is None:
                raise NotFoundError(f"no {kind.value} with id {doc_id}")
            doc = copy.deepcopy(doc)
            doc.header.id = doc_id
            if not doc.header.created_at:
                doc.header.created_at = old.header.created_at
            report = mm.validate_document(doc)
            if not report.ok:
                raise ValidationError(report)
            for attr, _, _ in LINK_FIELDS[kind]:
                before, after = getattr(old, attr), getattr(doc, attr)
                if before != after and not (
                    not before and (kind, attr) in _SETTABLE_ONCE
                ):
                    raise IntegrityError(
                        f"link field {attr} is immutable (was {before!r}, got {after!r})"
                    )
            self._check_links(kind, doc)
            self._write_doc(kind, doc)
            self._index_links(kind, old, add=False)
            self._docs[kind][doc_id] = doc
            self._index_links(kind, doc, add=True)

    def delete_artifact(self, kind: ArtifactKind, doc_id: str) -> None:
        kind = ArtifactKind(kind)
        with self._lock:
            doc = self._docs[kind].get(doc_id)
            if doc is None:
                raise NotFoundError(f"no {kind.value} with id {doc_id}")
            referrers = sorted(self._inbound.get((kind, doc_id), ()))
            if referrers:
                listing = ", ".join(f"{k.value}:{i}" for k, i in referrers)
                raise IntegrityError(
                    f"{kind.value} {doc_id} is referenced by {listing}", referrers=referrers
                )
            os.unlink(self._doc_path(kind, doc_id))
            self._index_links(kind, doc, add=False)
            del self._docs[kind][doc_id]

    def query_artifacts(
        self, kind: ArtifactKind, flt: QueryFilter
    ) -> list[mm.ArtifactDocument]:
        """All documents of a kind satisfying every filter clause, ordered by
        (created_at, id)."""
        kind = ArtifactKind(kind)
        flt.validate()
        with self._lock:
            hits = [doc for doc in self._docs[kind].values() if flt.matches(doc)]
            hits.sort(key=lambda d: (d.header.created_at, d.header.id))
            return copy.deepcopy(hits)

    def list_ids(self, kind: ArtifactKind) -> list[str]:
        kind = ArtifactKind(kind)
        with self._lock:
            return sorted(self._docs[kind])

    # -- object storage ----------------------------------------------------

    def _object_path(self, digest: str) -> Path:
        return self.root / "objects" / digest[:2] / digest

    def put_object(self, data: bytes) -> ObjectRef:
        """Content-addressed store: same bytes always yield the same ref and
        a single stored copy."""
        digest = hashlib.sha256(data).hexdigest()
        path = self._object_path(digest)
        with self._lock:
            if not path.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
                _atomic_write(path, data)
        return ObjectRef(hash=digest, size_bytes=len(data))

    def fetch_object(self, ref: ObjectRef | str) -> bytes:
        digest = ref.hash if isinstance(ref, ObjectRef) else ref
        path = self._object_path(digest)
        if not path.exists():
            raise NotFoundError(f"no object with hash {digest}")
        return path.read_bytes()

    def has_object(self, digest: str) -> bool:
        return self._object_path(digest).exists()

    # -- experiment queries -------------------------------------------------

    def runs_for_experiment(self, key: ExperimentKey) -> list[mm.Run]:
        """All runs matching the non-wildcard fields of the key, ordered by
        (dataset_params_id, repeat_index)."""
        with self._lock:
            runs = [r for r in self._docs[ArtifactKind.RUN].values() if key.matches(r)]
            runs.sort(key=lambda r: (r.dataset_params_id, r.repeat_index, r.header.id))
            return copy.deepcopy(runs)

    # -- audit ---------------------------------------------------------------

    def audit(self) -> ValidationReport:
        """Full-store referential integrity check: every link field in every
        stored document resolves, and every asset ref exists."""
        report = ValidationReport()
        with self._lock:
            for kind in ArtifactKind:
                for doc_id, doc in self._docs[kind].items():
                    for attr, target_kind, required in LINK_FIELDS[kind]:
                        target_id = getattr(doc, attr)
                        if not target_id:
                            if required:
                                report.add(f"{kind.value}/{doc_id}.{attr}", "missing link")
                            continue
                        if target_id not in self._docs[target_kind]:
                            report.add(
                                f"{kind.value}/{doc_id}.{attr}",
                                f"dangling reference to {target_kind.value} {target_id}",
                            )
                    if isinstance(doc, mm.TrainedPipeline):
                        for ref in doc.asset_refs:
                            if not self.has_object(ref.hash):
                                report.add(
                                    f"{kind.value}/{doc_id}.asset_refs",
                                    f"missing object {ref.hash}",
                                )
        return report
