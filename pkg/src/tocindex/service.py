"""HTTP API over the pipeline: upload, index, read back, evaluate.

Bodies are parsed by the toolkit's own strict readers rather than request
models, so malformed input maps to 400 and the 422 status stays reserved
for documents where no ToC can be found.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .errors import (
    EmptyReply,
    InvariantViolation,
    MalformedInput,
    NoRecognizableStructure,
    NoTocFound,
    NotFound,
    SchemaViolation,
    StorageCorrupt,
    TocIndexError,
    TransportError,
)
from .evaluator import MatchPolicy, evaluate
from .llmbackend import LlmConfig
from .pagedoc import ingest_paged_json
from .pipeline import BackendKind, BackendSpec, Store, run
from .tocgrammar import index_from_jsonable
from .toclocator import ClassifierConfig

DEFAULT_MAX_UPLOAD_BYTES = 16 * 1024 * 1024

# Total mapping of pipeline errors onto documented status codes.
_STATUS_FOR_ERROR: tuple[tuple[type, int], ...] = (
    (NotFound, 404),
    (NoTocFound, 422),
    (NoRecognizableStructure, 422),
    (TransportError, 502),
    (EmptyReply, 502),
    (SchemaViolation, 502),
    (MalformedInput, 400),
    (InvariantViolation, 400),
    (StorageCorrupt, 500),
)


@dataclass(frozen=True)
class ServiceConfig:
    store_root: Path
    host: str = "127.0.0.1"
    port: int = 8000
    default_backend: str = "heuristic"
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    llm: LlmConfig | None = None
    mock_fixtures_dir: Path | None = None

    @classmethod
    def from_jsonable(cls, obj) -> "ServiceConfig":
        if not isinstance(obj, dict) or "store_root" not in obj:
            raise MalformedInput('service config needs a "store_root"')
        kwargs: dict = {"store_root": Path(obj["store_root"])}
        for name in ("host", "default_backend"):
            if name in obj:
                kwargs[name] = str(obj[name])
        for name in ("port", "max_upload_bytes"):
            if name in obj:
                kwargs[name] = int(obj[name])
        if "classifier_config" in obj:
            kwargs["classifier"] = ClassifierConfig.from_json_file(obj["classifier_config"])
        if "llm" in obj:
            kwargs["llm"] = LlmConfig.from_jsonable(obj["llm"])
        if "mock_fixtures_dir" in obj:
            kwargs["mock_fixtures_dir"] = Path(obj["mock_fixtures_dir"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "ServiceConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"service config is not valid JSON: {exc}") from exc
        return cls.from_jsonable(obj)


def _error_response(exc: TocIndexError) -> JSONResponse:
    status = next(
        (code for err_type, code in _STATUS_FOR_ERROR if isinstance(exc, err_type)), 500
    )
    body = {"error": type(exc).__name__, "detail": str(exc)}
    if exc.stage is not None:
        body["stage"] = exc.stage
    return JSONResponse(body, status_code=status)


def _resolve_backend(name: str, config: ServiceConfig) -> BackendSpec:
    if name == "heuristic":
        return BackendSpec(kind=BackendKind.HEURISTIC)
    if name == "llm":
        if config.llm is None:
            raise MalformedInput("llm backend requested but no LLM is configured")
        return BackendSpec(kind=BackendKind.LLM, llm_config=config.llm)
    if name == "mock":
        if config.mock_fixtures_dir is None:
            raise MalformedInput("mock backend requested but no fixture directory is configured")
        return BackendSpec(kind=BackendKind.MOCK, mock_fixtures_dir=config.mock_fixtures_dir)
    raise MalformedInput(f"unknown backend {name!r}")


def create_app(config: ServiceConfig) -> FastAPI:
    config.store_root.mkdir(parents=True, exist_ok=True)
    if not os.access(config.store_root, os.W_OK):
        raise InvariantViolation(f"store root {config.store_root} is not writable")
    store = Store(config.store_root)

    app = FastAPI(title="tocindex", version=__version__)

    @app.post("/documents")
    async def upload_document(request: Request):
        body = await request.body()
        if len(body) > config.max_upload_bytes:
            return JSONResponse(
                {"error": "TooLarge", "detail": f"body exceeds {config.max_upload_bytes} bytes"},
                status_code=413,
            )
        try:
            doc = ingest_paged_json(body)
        except TocIndexError as exc:
            return _error_response(exc)
        existed = store.has_document(doc.doc_id)
        if not existed:
            store.put_document(doc)
        return JSONResponse({"doc_id": doc.doc_id}, status_code=200 if existed else 201)

    @app.post("/documents/{doc_id}/index")
    def index_document(doc_id: str, backend: str | None = None):
        try:
            doc = store.get_document(doc_id)
            spec = _resolve_backend(backend or config.default_backend, config)
            record = run(doc, spec, config.classifier, store=store)
        except TocIndexError as exc:
            return _error_response(exc)
        return JSONResponse(record.to_jsonable(), status_code=200)

    @app.get("/documents/{doc_id}/index")
    def read_index(doc_id: str):
        try:
            record = store.get_record(doc_id)
        except TocIndexError as exc:
            return _error_response(exc)
        return JSONResponse(record.to_jsonable(), status_code=200)

    @app.get("/documents")
    def list_documents():
        rows = store.list_records()
        return JSONResponse(
            {
                "documents": [
                    {"doc_id": doc_id, "created_at": created_at, "backend": kind}
                    for doc_id, created_at, kind in rows
                ]
            }
        )

    @app.get("/healthz")
    def healthz():
        return JSONResponse({"status": "ok", "version": __version__})

    @app.post("/evaluate")
    async def evaluate_indexes(request: Request):
        raw = await request.body()
        try:
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise MalformedInput(f"body is not valid UTF-8 JSON: {exc}") from exc
            if not isinstance(obj, dict) or "predicted" not in obj or "gold" not in obj:
                raise MalformedInput('body needs "predicted" and "gold" indexes')
            predicted = index_from_jsonable(obj["predicted"])
            gold = index_from_jsonable(obj["gold"])
            policy = MatchPolicy.from_jsonable(obj.get("policy", {}))
        except TocIndexError as exc:
            return _error_response(exc)
        report = evaluate(predicted, gold, policy)
        return JSONResponse(report.to_jsonable(), status_code=200)

    return app
