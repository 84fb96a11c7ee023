"""Command-line entry point driving every stage of the toolkit.

Machine-readable JSON goes to stdout (exactly one document per run unless
``--out`` redirects it); logs and the bench table go to stderr. Exit codes:
0 success, 1 usage, 2 input error, 3 extraction error, 4 transport error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from pathlib import Path

from .corpusgen import CorpusSpec, NoiseSpec, write_corpus
from .errors import (
    EmptyReply,
    InvariantViolation,
    MalformedInput,
    NoRecognizableStructure,
    NoTocFound,
    NotFound,
    SchemaViolation,
    StorageCorrupt,
    TransportError,
)
from .evaluator import EXACT_POLICY, MatchPolicy, evaluate, evaluate_corpus
from .llmbackend import LlmConfig
from .pagedoc import ingest_paged_json, ingest_plain_text
from .pipeline import BackendKind, BackendSpec, extract
from .tocgrammar import FormatKind, TocIndex, index_from_json_bytes, index_to_jsonable
from .toclocator import ClassifierConfig, classify_page

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_EXTRACTION = 3
EXIT_TRANSPORT = 4

_INPUT_ERRORS = (
    MalformedInput,
    InvariantViolation,
    NotFound,
    StorageCorrupt,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)
_EXTRACTION_ERRORS = (NoTocFound, NoRecognizableStructure, SchemaViolation)
_TRANSPORT_ERRORS = (TransportError, EmptyReply)


class UsageError(Exception):
    """Flag combination errors that argparse cannot express."""

log = logging.getLogger("tocindex")


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, ensure_ascii=False, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        log.info("wrote %s", out)
    else:
        print(text)


def _load_document(path: str):
    data = Path(path).read_bytes()
    if path.endswith(".pgdoc.json") or path.endswith(".json"):
        return ingest_paged_json(data)
    return ingest_plain_text(data.decode("utf-8"))


def _load_classifier(args) -> ClassifierConfig:
    if getattr(args, "classifier_config", None):
        return ClassifierConfig.from_json_file(args.classifier_config)
    return ClassifierConfig()


def _resolve_backend(args) -> BackendSpec:
    name = args.backend
    if name == "heuristic":
        return BackendSpec(kind=BackendKind.HEURISTIC)
    if name == "llm":
        if not args.llm_config:
            raise UsageError("--llm-config is required with --backend llm")
        obj = json.loads(Path(args.llm_config).read_text(encoding="utf-8"))
        return BackendSpec(kind=BackendKind.LLM, llm_config=LlmConfig.from_jsonable(obj))
    if name == "mock":
        if not args.mock_fixtures:
            raise UsageError("--mock-fixtures is required with --backend mock")
        return BackendSpec(kind=BackendKind.MOCK, mock_fixtures_dir=Path(args.mock_fixtures))
    raise UsageError(f"unknown backend {name!r}")


def _policy_from_name(name: str) -> MatchPolicy:
    if name == "exact":
        return EXACT_POLICY
    if name == "normalized":
        return MatchPolicy()
    raise MalformedInput(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    doc = _load_document(args.file)
    payload = {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "pages": [{"number": p.number, "lines": list(p.lines)} for p in doc.pages],
    }
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_classify(args) -> int:
    doc = _load_document(args.file)
    config = _load_classifier(args)
    labels = [classify_page(page, config) for page in doc.pages]
    payload = {
        "doc_id": doc.doc_id,
        "labels": [
            {
                "page_number": label.page_number,
                "label": label.label.value,
                "score": label.score,
                "features": dict(label.features),
            }
            for label in labels
        ],
    }
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_index(args) -> int:
    doc = _load_document(args.file)
    backend = _resolve_backend(args)
    index, diagnostics = extract(doc, backend, classifier=_load_classifier(args))
    for line in diagnostics:
        log.info("%s", line)
    _emit(index_to_jsonable(index), args.out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    predicted = index_from_json_bytes(Path(args.pred).read_bytes())
    gold = index_from_json_bytes(Path(args.gold).read_bytes())
    report = evaluate(predicted, gold, _policy_from_name(args.policy))
    _emit(report.to_jsonable(), args.out)
    return EXIT_OK


def _cmd_gen_corpus(args) -> int:
    noise = NoiseSpec(
        dot_leader_prob=args.dot_leader_prob,
        trailing_pageno_prob=args.trailing_pageno_prob,
        header_footer_prob=args.header_footer_prob,
        blank_page_prob=args.blank_page_prob,
        title_corruption_prob=args.title_corruption_prob,
    )
    spec = CorpusSpec(
        seed=args.seed,
        format=FormatKind(args.format),
        noise=noise,
        toc_lines_per_page=args.toc_lines_per_page,
    )
    manifest = write_corpus(spec, args.docs, args.out_dir)
    log.info("wrote %d documents to %s", args.docs, args.out_dir)
    _emit(manifest, None)
    return EXIT_OK


def _bench_one(entry: dict, corpus: Path, backend: BackendSpec, classifier: ClassifierConfig):
    doc = ingest_paged_json((corpus / entry["doc"]).read_bytes())
    gold = index_from_json_bytes((corpus / entry["gold"]).read_bytes())
    try:
        predicted, _ = extract(doc, backend, classifier=classifier)
        note = None
    except _EXTRACTION_ERRORS as exc:
        predicted = TocIndex()
        note = f"{entry['stem']}: {type(exc).__name__}: {exc}"
    return entry["stem"], predicted, gold, note


def _cmd_bench(args) -> int:
    corpus = Path(args.corpus)
    manifest = json.loads((corpus / "manifest.json").read_text(encoding="utf-8"))
    backend = _resolve_backend(args)
    classifier = _load_classifier(args)
    jobs = args.jobs or os.cpu_count() or 1

    results = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_bench_one, entry, corpus, backend, classifier)
            for entry in manifest["docs"]
        ]
        for future in concurrent.futures.as_completed(futures):
            results.append(future.result())
    results.sort(key=lambda item: item[0])

    for _, _, _, note in results:
        if note:
            log.warning("%s", note)
    report = evaluate_corpus([(predicted, gold) for _, predicted, gold, _ in results])

    accuracy = {
        "HN": report.hn_acc,
        "HT": report.ht_acc,
        "SHN": report.shn_acc,
        "SHT": report.sht_acc,
        "Avrg": report.macro_avg,
    }
    print("field  accuracy", file=sys.stderr)
    for name, value in accuracy.items():
        print(f"{name:<6} {value:.3f}", file=sys.stderr)

    payload = {
        "backend": args.backend,
        "documents": len(results),
        "accuracy": accuracy,
        "counts": report.to_jsonable()["counts"],
    }
    _emit(payload, args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.from_json_file(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tocindex",
        description="Locate and structure tables of contents in paged documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("--out", help="write the JSON result to this path instead of stdout")

    def add_classifier(p):
        p.add_argument("--classifier-config", help="JSON file overriding classifier defaults")

    def add_backend(p):
        p.add_argument(
            "--backend", choices=("heuristic", "llm", "mock"), default="heuristic"
        )
        p.add_argument("--llm-config", help="JSON file with the LLM endpoint configuration")
        p.add_argument("--mock-fixtures", help="directory of canned replies for the mock backend")

    p = sub.add_parser("ingest", help="validate a document and print its canonical form")
    p.add_argument("file")
    add_out(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("classify", help="label every page of a document")
    p.add_argument("file")
    add_classifier(p)
    add_out(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("index", help="extract the structured index of a document")
    p.add_argument("file")
    add_backend(p)
    add_classifier(p)
    add_out(p)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("eval", help="score a predicted index against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--policy", choices=("exact", "normalized"), default="normalized")
    add_out(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus with gold answers")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--format", choices=("A", "B"), required=True)
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--toc-lines-per-page", type=int, default=40)
    p.add_argument("--dot-leader-prob", type=float, default=0.0)
    p.add_argument("--trailing-pageno-prob", type=float, default=0.0)
    p.add_argument("--header-footer-prob", type=float, default=0.0)
    p.add_argument("--blank-page-prob", type=float, default=0.0)
    p.add_argument("--title-corruption-prob", type=float, default=0.0)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("bench", help="run a backend over a corpus and report accuracy")
    p.add_argument("--corpus", required=True)
    add_backend(p)
    add_classifier(p)
    p.add_argument("--jobs", type=int, default=None)
    add_out(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except _TRANSPORT_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_TRANSPORT
    except _EXTRACTION_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_EXTRACTION
    except _INPUT_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
