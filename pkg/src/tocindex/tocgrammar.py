"""Deterministic line grammars that structure ToC text into a nested index.

Two document families are supported. Format A is the section/part style
("SECTION 01100 - SUMMARY" headings with "1.1 RELATED DOCUMENTS"
subheadings); format B is the MasterFormat division/section style
("DIVISION 03 - CONCRETE" headings with "03 30 00 Cast-in-Place Concrete"
subheadings). Lines matching no rule are skipped with a diagnostic so that
running headers, footers, and dot-leader decorations never corrupt the
parse.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .errors import InvariantViolation, MalformedInput, NoRecognizableStructure
from .pagedoc import PagedDocument


class FormatKind(Enum):
    FORMAT_A = "A"
    FORMAT_B = "B"


@dataclass(frozen=True)
class Subheading:
    shn: str
    sht: str

    def __post_init__(self):
        if not self.shn:
            raise InvariantViolation("subheading number must be non-empty")
        if not self.sht:
            raise InvariantViolation("subheading title must be non-empty")


@dataclass(frozen=True)
class Heading:
    hn: str
    ht: str
    subheadings: tuple[Subheading, ...] = ()

    def __post_init__(self):
        if not self.hn:
            raise InvariantViolation("heading number must be non-empty")
        if not self.ht:
            raise InvariantViolation("heading title must be non-empty")


@dataclass(frozen=True)
class TocIndex:
    """Ordered headings, each carrying its ordered subheadings."""

    headings: tuple[Heading, ...] = ()


# Line grammar. Keyword matching is case-insensitive; the numeric shapes are
# not. Subheading rules capture an optional trailing dot-leader + page
# number so it never leaks into the title.
HEADING_RULE_B = re.compile(r"^DIVISION\s+(\d{1,2})\s*[-–—:]?\s*(.+)$", re.IGNORECASE)
SUBHEADING_RULE_B = re.compile(r"^(\d{2}\s?\d{2}\s?\d{2})\s+(.+?)(\s*\.{3,}\s*\d+)?$")
HEADING_RULE_A = re.compile(r"^SECTION\s+(\d{4,6})\s*[-–—:]\s*(.+)$", re.IGNORECASE)
SUBHEADING_RULE_A = re.compile(r"^(\d+(?:\.\d+)+)\s+(.+?)(\s*\.{3,}\s*\d+)?$")

_ALL_RULES = (HEADING_RULE_A, SUBHEADING_RULE_A, HEADING_RULE_B, SUBHEADING_RULE_B)

_RULES_BY_FORMAT = {
    FormatKind.FORMAT_A: (HEADING_RULE_A, SUBHEADING_RULE_A),
    FormatKind.FORMAT_B: (HEADING_RULE_B, SUBHEADING_RULE_B),
}

# Trailing decorations on titles: a dot-leader run with an optional page
# number, or a bare page number.
_TRAILING_DECORATION = re.compile(r"(?:\s*\.{3,}\s*\d*|\s+\d+)\s*$")


def matches_any_rule(line: str) -> bool:
    """True if the stripped line matches any heading or subheading rule."""
    stripped = line.strip()
    return bool(stripped) and any(rule.match(stripped) for rule in _ALL_RULES)


def _clean_title(raw: str) -> str:
    """Strip trailing dot leaders and page-number references from a title."""
    title = raw.strip()
    while True:
        stripped = _TRAILING_DECORATION.sub("", title).strip()
        if stripped == title:
            return title
        title = stripped


def detect_format(lines) -> FormatKind:
    """Pick the grammar family for a block of ToC lines.

    Format B wins when more lines match its heading rule than format A's;
    ties resolve to format A. Raises when no line matches any rule at all.
    """
    if not lines:
        raise InvariantViolation("detect_format requires at least one line")
    stripped = [line.strip() for line in lines]
    b_count = sum(1 for line in stripped if line and HEADING_RULE_B.match(line))
    a_count = sum(1 for line in stripped if line and HEADING_RULE_A.match(line))
    if not any(matches_any_rule(line) for line in stripped):
        raise NoRecognizableStructure("no line matches any heading or subheading rule")
    return FormatKind.FORMAT_B if b_count > a_count else FormatKind.FORMAT_A


def parse_toc(lines, format: FormatKind, diagnostics: list[str] | None = None) -> TocIndex:
    """Run the line grammar for ``format`` over ``lines`` top to bottom.

    A heading rule match opens a new heading; a subheading rule match
    appends to the current one. Everything else is skipped and recorded in
    ``diagnostics`` (when a list is supplied). A subheading with no open
    heading is an orphan: skipped, diagnosed, never fatal on its own.
    """
    if not lines:
        raise InvariantViolation("parse_toc requires at least one line")
    if diagnostics is None:
        diagnostics = []
    heading_rule, subheading_rule = _RULES_BY_FORMAT[format]

    headings: list[Heading] = []
    current_number: str | None = None
    current_title: str | None = None
    current_subs: list[Subheading] = []

    def flush():
        if current_number is not None:
            headings.append(
                Heading(hn=current_number, ht=current_title, subheadings=tuple(current_subs))
            )

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        hm = heading_rule.match(line)
        if hm:
            title = _clean_title(hm.group(2))
            if not title:
                diagnostics.append(f"skipped: line {lineno}: heading with empty title: {line!r}")
                continue
            flush()
            current_number = hm.group(1)
            current_title = title
            current_subs = []
            continue
        sm = subheading_rule.match(line)
        if sm:
            title = _clean_title(sm.group(2))
            if not title:
                diagnostics.append(f"skipped: line {lineno}: subheading with empty title: {line!r}")
                continue
            if current_number is None:
                diagnostics.append(f"orphan-subheading: line {lineno}: {line!r}")
                continue
            current_subs.append(Subheading(shn=re.sub(r"\s", "", sm.group(1)), sht=title))
            continue
        diagnostics.append(f"skipped: line {lineno}: {line!r}")

    flush()
    if not headings:
        raise NoRecognizableStructure(
            "no heading produced from ToC lines", diagnostics=tuple(diagnostics)
        )
    return TocIndex(headings=tuple(headings))


def parse_document(doc: PagedDocument, toc_labels, diagnostics: list[str] | None = None) -> TocIndex:
    """Parse the ToC pages named by ``toc_labels`` as one sequential stream.

    Lines of all labeled pages are concatenated in page order before format
    detection, so headings whose subheadings spill onto the next page attach
    correctly.
    """
    if not toc_labels:
        raise InvariantViolation("parse_document requires at least one ToC page label")
    by_number = {page.number: page for page in doc.pages}
    page_numbers = sorted({label.page_number for label in toc_labels})
    for number in page_numbers:
        if number not in by_number:
            raise InvariantViolation(f"label refers to page {number} not present in document")

    lines: list[str] = []
    for number in page_numbers:
        lines.extend(by_number[number].lines)
    format = detect_format(lines)
    return parse_toc(lines, format, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Canonical index JSON
# ---------------------------------------------------------------------------


def index_to_jsonable(index: TocIndex) -> dict:
    """Plain-dict form of the canonical index JSON."""
    return {
        "toc": [
            {
                "hn": h.hn,
                "ht": h.ht,
                "sh": [{"shn": s.shn, "sht": s.sht} for s in h.subheadings],
            }
            for h in index.headings
        ]
    }


def index_to_json_bytes(index: TocIndex) -> bytes:
    """Deterministic UTF-8 bytes of the canonical index JSON."""
    return json.dumps(index_to_jsonable(index), ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


def index_from_jsonable(obj) -> TocIndex:
    """Strictly validate a parsed JSON value against the index schema."""
    if not isinstance(obj, dict):
        raise MalformedInput("index JSON must be an object")
    if "toc" not in obj:
        raise MalformedInput('index JSON is missing "toc"')
    entries = obj["toc"]
    if not isinstance(entries, list):
        raise MalformedInput('"toc" must be an array')
    headings: list[Heading] = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise MalformedInput(f"toc[{i}] must be an object")
        hn, ht, sh = entry.get("hn"), entry.get("ht"), entry.get("sh")
        if not isinstance(hn, str) or not hn:
            raise MalformedInput(f'toc[{i}].hn must be a non-empty string')
        if not isinstance(ht, str) or not ht:
            raise MalformedInput(f'toc[{i}].ht must be a non-empty string')
        if not isinstance(sh, list):
            raise MalformedInput(f"toc[{i}].sh must be an array")
        subs: list[Subheading] = []
        for j, raw in enumerate(sh):
            if not isinstance(raw, dict):
                raise MalformedInput(f"toc[{i}].sh[{j}] must be an object")
            shn, sht = raw.get("shn"), raw.get("sht")
            if not isinstance(shn, str) or not shn:
                raise MalformedInput(f"toc[{i}].sh[{j}].shn must be a non-empty string")
            if not isinstance(sht, str) or not sht:
                raise MalformedInput(f"toc[{i}].sh[{j}].sht must be a non-empty string")
            subs.append(Subheading(shn=shn, sht=sht))
        headings.append(Heading(hn=hn, ht=ht, subheadings=tuple(subs)))
    return TocIndex(headings=tuple(headings))


def index_from_json_bytes(data: bytes) -> TocIndex:
    """Parse canonical index JSON bytes, validating strictly."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"index is not valid UTF-8 JSON: {exc}") from exc
    return index_from_jsonable(obj)
