"""Pipeline orchestration and the content-addressed index store.

``run`` takes a document through ingest → locate → extract with the chosen
backend and persists the result. The store is a plain directory tree keyed
by doc_id (``store/<doc_id>/document.pgdoc.json``, ``index.json``,
``meta.json``) with atomic writes and digest checks on read, narrow enough
to swap a real database behind later.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import threading
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from . import __version__
from .errors import (
    InvariantViolation,
    MalformedInput,
    NoTocFound,
    NotFound,
    StorageCorrupt,
    TocIndexError,
)
from .llmbackend import (
    DEFAULT_MOCK_CONFIG,
    FewShotExample,
    HttpTransport,
    LlmConfig,
    MockTransport,
    default_few_shot_example,
    retrieve_toc_text,
    structure_toc,
)
from .pagedoc import PagedDocument, canonical_serialize, ingest_paged_json
from .tocgrammar import TocIndex, index_from_json_bytes, index_to_json_bytes, index_to_jsonable, parse_document
from .toclocator import ClassifierConfig, locate_toc

_DOC_ID = re.compile(r"^[0-9a-f]{64}$")

DOCUMENT_FILE = "document.pgdoc.json"
INDEX_FILE = "index.json"
META_FILE = "meta.json"


class BackendKind(Enum):
    HEURISTIC = "heuristic"
    LLM = "llm"
    MOCK = "mock"


@dataclass(frozen=True)
class BackendSpec:
    kind: BackendKind
    llm_config: LlmConfig | None = None
    # Directory of canned replies; consulted only when kind is MOCK.
    mock_fixtures_dir: Path | None = None

    def __post_init__(self):
        if (self.kind is BackendKind.LLM) != (self.llm_config is not None):
            raise InvariantViolation("llm_config must be present exactly when kind is LLM")
        if self.kind is BackendKind.MOCK and self.mock_fixtures_dir is None:
            raise InvariantViolation("mock backend needs a fixture directory")

    def descriptor(self) -> dict:
        model = None
        if self.kind is BackendKind.LLM:
            model = self.llm_config.model_name
        elif self.kind is BackendKind.MOCK:
            model = DEFAULT_MOCK_CONFIG.model_name
        return {"kind": self.kind.value, "model": model}


@dataclass(frozen=True)
class IndexRecord:
    doc_id: str
    index: TocIndex
    backend: dict
    created_at: str
    diagnostics: tuple[str, ...]
    pipeline_version: str

    def to_jsonable(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "backend": dict(self.backend),
            "created_at": self.created_at,
            "diagnostics": list(self.diagnostics),
            "pipeline_version": self.pipeline_version,
            "index": index_to_jsonable(self.index),
        }


def _annotate(stage: str):
    """Context manager tagging toolkit errors with the failing stage."""

    class _Annotator:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if isinstance(exc, TocIndexError) and exc.stage is None:
                exc.stage = stage
            return False

    return _Annotator()


def extract(
    doc: PagedDocument,
    backend: BackendSpec,
    classifier: ClassifierConfig | None = None,
    example: FewShotExample | None = None,
) -> tuple[TocIndex, list[str]]:
    """Produce an index from a document without persisting anything."""
    diagnostics: list[str] = []
    if backend.kind is BackendKind.HEURISTIC:
        config = classifier if classifier is not None else ClassifierConfig()
        with _annotate("locate"):
            labels = locate_toc(doc, config)
            if not labels:
                raise NoTocFound(f"no page of document {doc.doc_id} classified as ToC")
        with _annotate("parse"):
            index = parse_document(doc, labels, diagnostics=diagnostics)
        return index, diagnostics

    if backend.kind is BackendKind.LLM:
        llm_config = backend.llm_config
        transport = HttpTransport(llm_config)
    else:
        llm_config = DEFAULT_MOCK_CONFIG
        transport = MockTransport(backend.mock_fixtures_dir)
    few_shot = example if example is not None else default_few_shot_example()
    with _annotate("retrieve"):
        lines = retrieve_toc_text(doc, llm_config, transport=transport)
    with _annotate("structure"):
        index = structure_toc(lines, few_shot, llm_config, transport=transport)
    return index, diagnostics


def run(
    doc: PagedDocument,
    backend: BackendSpec,
    classifier: ClassifierConfig | None = None,
    *,
    store: "Store",
    example: FewShotExample | None = None,
) -> IndexRecord:
    """Extract with the chosen backend, persist, and return the record."""
    index, diagnostics = extract(doc, backend, classifier=classifier, example=example)
    record = IndexRecord(
        doc_id=doc.doc_id,
        index=index,
        backend=backend.descriptor(),
        created_at=datetime.now(timezone.utc).isoformat(),
        diagnostics=tuple(diagnostics),
        pipeline_version=__version__,
    )
    store.put_document(doc)
    store.put_record(record)
    return record


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


class Store:
    """File-backed record store, one directory per document id.

    Writes for a given doc_id are serialized (last writer wins on re-runs);
    reads rely on the atomic-rename discipline and never lock.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock_for(self, doc_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[doc_id]

    def _dir_for(self, doc_id: str) -> Path:
        if not _DOC_ID.match(doc_id):
            raise NotFound(f"not a document id: {doc_id!r}")
        return self.root / doc_id

    def put_document(self, doc: PagedDocument) -> Path:
        target = self.root / doc.doc_id
        with self._lock_for(doc.doc_id):
            target.mkdir(parents=True, exist_ok=True)
            _atomic_write(target / DOCUMENT_FILE, canonical_serialize(doc))
        return target

    def has_document(self, doc_id: str) -> bool:
        try:
            return (self._dir_for(doc_id) / DOCUMENT_FILE).is_file()
        except NotFound:
            return False

    def get_document(self, doc_id: str) -> PagedDocument:
        path = self._dir_for(doc_id) / DOCUMENT_FILE
        if not path.is_file():
            raise NotFound(f"no document stored under {doc_id}")
        return ingest_paged_json(path.read_bytes())

    def put_record(self, record: IndexRecord) -> Path:
        target = self._dir_for(record.doc_id)
        with self._lock_for(record.doc_id):
            if not (target / DOCUMENT_FILE).is_file():
                raise NotFound(f"no document stored under {record.doc_id}")
            index_bytes = index_to_json_bytes(record.index)
            document_bytes = (target / DOCUMENT_FILE).read_bytes()
            meta = {
                "doc_id": record.doc_id,
                "backend": dict(record.backend),
                "created_at": record.created_at,
                "diagnostics": list(record.diagnostics),
                "pipeline_version": record.pipeline_version,
                "digests": {
                    INDEX_FILE: hashlib.sha256(index_bytes).hexdigest(),
                    DOCUMENT_FILE: hashlib.sha256(document_bytes).hexdigest(),
                },
            }
            _atomic_write(target / INDEX_FILE, index_bytes)
            _atomic_write(
                target / META_FILE,
                json.dumps(meta, ensure_ascii=False, separators=(",", ":")).encode("utf-8"),
            )
        return target / INDEX_FILE

    def get_record(self, doc_id: str) -> IndexRecord:
        target = self._dir_for(doc_id)
        meta_path, index_path = target / META_FILE, target / INDEX_FILE
        if not meta_path.is_file() or not index_path.is_file():
            raise NotFound(f"no index record stored under {doc_id}")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StorageCorrupt(f"meta.json for {doc_id} is unreadable: {exc}") from exc

        index_bytes = index_path.read_bytes()
        document_path = target / DOCUMENT_FILE
        digests = meta.get("digests", {})
        if digests.get(INDEX_FILE) != hashlib.sha256(index_bytes).hexdigest():
            raise StorageCorrupt(f"index.json for {doc_id} does not match its recorded digest")
        if document_path.is_file():
            actual = hashlib.sha256(document_path.read_bytes()).hexdigest()
            if digests.get(DOCUMENT_FILE) != actual:
                raise StorageCorrupt(
                    f"document.pgdoc.json for {doc_id} does not match its recorded digest"
                )
        try:
            index = index_from_json_bytes(index_bytes)
        except MalformedInput as exc:
            raise StorageCorrupt(f"index.json for {doc_id} is not a valid index: {exc}") from exc
        return IndexRecord(
            doc_id=meta["doc_id"],
            index=index,
            backend=meta["backend"],
            created_at=meta["created_at"],
            diagnostics=tuple(meta.get("diagnostics", ())),
            pipeline_version=meta.get("pipeline_version", ""),
        )

    def list_records(self) -> list[tuple[str, str, str]]:
        """(doc_id, created_at, backend kind) for every record, oldest first."""
        rows: list[tuple[str, str, str]] = []
        for entry in self.root.iterdir():
            if not entry.is_dir() or not _DOC_ID.match(entry.name):
                continue
            meta_path = entry / META_FILE
            if not meta_path.is_file():
                continue
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise StorageCorrupt(f"meta.json for {entry.name} is unreadable: {exc}") from exc
            rows.append((entry.name, meta["created_at"], meta["backend"]["kind"]))
        rows.sort(key=lambda row: (row[1], row[0]))
        return rows
