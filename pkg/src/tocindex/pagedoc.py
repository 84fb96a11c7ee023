"""Paged-document model, canonical serialization, and text ingestion.

A :class:`PagedDocument` is the unit every downstream stage consumes: an
ordered list of page texts plus an optional title. Documents are
content-addressed: ``doc_id`` is the SHA-256 of the canonical serialization,
so two documents with the same content always share an id regardless of how
their source JSON was formatted.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import cached_property

from .errors import InvariantViolation, MalformedInput

# Lines longer than this are hard-wrapped during normalization.
MAX_LINE_CHARS = 4096

# A form-feed on a line of its own separates pages in plain-text dumps.
DEFAULT_PAGE_DELIMITER = "\x0c"


# Split on CR/LF only; str.splitlines would also break on form feeds and
# other separators that are legal inside a page line.
_LINE_BREAK = re.compile(r"\r\n|\r|\n")


def _split_crlf(text: str) -> list[str]:
    pieces = _LINE_BREAK.split(text)
    if len(pieces) > 1 and pieces[-1] == "":
        pieces.pop()
    return pieces


def normalize_lines(raw_lines) -> tuple[str, ...]:
    """Normalize raw text lines to the PageText hygiene rules.

    Embedded CR/LF split into separate lines, trailing whitespace is
    stripped, and anything longer than :data:`MAX_LINE_CHARS` is wrapped at
    that boundary.
    """
    out: list[str] = []
    for raw in raw_lines:
        for piece in _split_crlf(raw):
            piece = piece.rstrip()
            while len(piece) > MAX_LINE_CHARS:
                out.append(piece[:MAX_LINE_CHARS].rstrip())
                piece = piece[MAX_LINE_CHARS:]
            out.append(piece.rstrip())
    return tuple(out)


def _check_line(line: str) -> None:
    if "\r" in line or "\n" in line:
        raise InvariantViolation("page line contains CR or LF")
    if line != line.rstrip():
        raise InvariantViolation("page line has trailing whitespace")
    if len(line) > MAX_LINE_CHARS:
        raise InvariantViolation(f"page line exceeds {MAX_LINE_CHARS} characters")


@dataclass(frozen=True)
class PageText:
    """One page of text: a 1-based page number and its lines in order."""

    number: int
    lines: tuple[str, ...] = ()

    def __post_init__(self):
        if self.number < 1:
            raise InvariantViolation(f"page number must be positive, got {self.number}")
        for line in self.lines:
            _check_line(line)


@dataclass(frozen=True)
class PagedDocument:
    """An immutable ordered collection of pages, numbered contiguously from 1."""

    pages: tuple[PageText, ...]
    title: str | None = None

    def __post_init__(self):
        if not self.pages:
            raise InvariantViolation("document must have at least one page")
        for i, page in enumerate(self.pages, start=1):
            if page.number != i:
                raise InvariantViolation(
                    f"page numbers must be contiguous from 1; position {i} has number {page.number}"
                )

    @cached_property
    def doc_id(self) -> str:
        """Lowercase hex SHA-256 of the canonical serialization."""
        return hashlib.sha256(canonical_serialize(self)).hexdigest()


def canonical_serialize(doc: PagedDocument) -> bytes:
    """Serialize to deterministic UTF-8 JSON bytes.

    Fixed key order (title, pages; number, lines), compact separators, no
    ASCII escaping. Semantically equal documents produce identical bytes.
    """
    payload: dict = {}
    if doc.title is not None:
        payload["title"] = doc.title
    payload["pages"] = [
        {"number": page.number, "lines": list(page.lines)} for page in doc.pages
    ]
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def ingest_paged_json(data: bytes) -> PagedDocument:
    """Parse and validate interchange-format bytes into a PagedDocument.

    Any ``doc_id`` field in the input is ignored; the id is always
    recomputed from content. Lines are normalized on the way in.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInput(f"input is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"input is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedInput("document JSON must be an object")
    if "pages" not in obj:
        raise MalformedInput('document JSON is missing "pages"')
    raw_pages = obj["pages"]
    if not isinstance(raw_pages, list) or not raw_pages:
        raise MalformedInput('"pages" must be a non-empty array')

    title = obj.get("title")
    if title is not None and not isinstance(title, str):
        raise MalformedInput('"title" must be a string when present')

    pages: list[PageText] = []
    numbers: list[int] = []
    for raw in raw_pages:
        if not isinstance(raw, dict):
            raise MalformedInput("each page must be a JSON object")
        number = raw.get("number")
        if not isinstance(number, int) or isinstance(number, bool):
            raise MalformedInput('each page needs an integer "number"')
        lines = raw.get("lines")
        if not isinstance(lines, list) or any(not isinstance(l, str) for l in lines):
            raise MalformedInput('each page needs a "lines" array of strings')
        numbers.append(number)

    if numbers != list(range(1, len(numbers) + 1)):
        raise InvariantViolation(
            f"page numbers must run contiguously from 1, got {numbers}"
        )

    for raw in raw_pages:
        pages.append(PageText(number=raw["number"], lines=normalize_lines(raw["lines"])))
    return PagedDocument(pages=tuple(pages), title=title)


def ingest_plain_text(
    text: str,
    page_delimiter: str = DEFAULT_PAGE_DELIMITER,
    title: str | None = None,
) -> PagedDocument:
    """Split a plain-text dump into pages at delimiter lines.

    A line whose stripped content equals ``page_delimiter`` separates two
    pages; text with no delimiter becomes a single page. This is the adapter
    for text produced by external PDF extraction tools.
    """
    if not page_delimiter:
        raise ValueError("page_delimiter must be non-empty")
    if not text:
        raise MalformedInput("plain-text input is empty")

    groups: list[list[str]] = [[]]
    for line in _split_crlf(text):
        # Strip spaces and tabs only: the default delimiter is itself a
        # whitespace character and must survive the comparison.
        if line.strip(" \t") == page_delimiter:
            groups.append([])
        else:
            groups[-1].append(line)
    # A trailing delimiter ends the last page rather than opening an empty one.
    if len(groups) > 1 and not groups[-1]:
        groups.pop()

    pages = tuple(
        PageText(number=i, lines=normalize_lines(lines))
        for i, lines in enumerate(groups, start=1)
    )
    return PagedDocument(pages=pages, title=title)
