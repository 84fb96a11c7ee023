"""Seeded generator of synthetic specification documents with gold answers.

Each generated document carries its gold index (the structure the renderer
started from), gold ToC-page labels, and an optional corrupted prediction
fixture with a log of every injected corruption. Entry lines are rendered
through the exact grammars the parser uses, so on a noise-free document the
parse must reproduce the gold index field for field; decorative noise (dot
leaders, trailing page numbers, running headers and footers, blank pages)
is constructed so grammar rules strip or skip it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvariantViolation
from .evaluator import MatchPolicy
from .pagedoc import PagedDocument, PageText, canonical_serialize
from .tocgrammar import FormatKind, Heading, Subheading, TocIndex, index_to_json_bytes
from .toclocator import PageClass, PageLabel

# MasterFormat-style divisions (code, name). Names never end in a digit or a
# dot run, so decoration stripping can never eat into a gold title.
DIVISIONS = (
    ("01", "GENERAL REQUIREMENTS"),
    ("02", "EXISTING CONDITIONS"),
    ("03", "CONCRETE"),
    ("04", "MASONRY"),
    ("05", "METALS"),
    ("06", "WOOD, PLASTICS, AND COMPOSITES"),
    ("07", "THERMAL AND MOISTURE PROTECTION"),
    ("08", "OPENINGS"),
    ("09", "FINISHES"),
    ("10", "SPECIALTIES"),
    ("11", "EQUIPMENT"),
    ("12", "FURNISHINGS"),
    ("13", "SPECIAL CONSTRUCTION"),
    ("14", "CONVEYING EQUIPMENT"),
    ("21", "FIRE SUPPRESSION"),
    ("22", "PLUMBING"),
    ("23", "HEATING, VENTILATING, AND AIR CONDITIONING"),
    ("26", "ELECTRICAL"),
    ("27", "COMMUNICATIONS"),
    ("28", "ELECTRONIC SAFETY AND SECURITY"),
    ("31", "EARTHWORK"),
    ("32", "EXTERIOR IMPROVEMENTS"),
    ("33", "UTILITIES"),
)

SECTION_TOPICS = (
    "Common Work Results",
    "Cast-in-Place Concrete",
    "Precast Structural Concrete",
    "Unit Masonry",
    "Structural Steel Framing",
    "Metal Fabrications",
    "Rough Carpentry",
    "Finish Carpentry",
    "Thermal Insulation",
    "Metal Roof Panels",
    "Joint Sealants",
    "Hollow Metal Doors and Frames",
    "Overhead Coiling Doors",
    "Gypsum Board",
    "Acoustical Panel Ceilings",
    "Resilient Flooring",
    "Painting and Coating",
    "Visual Display Surfaces",
    "Toilet Compartments",
    "Water Distribution",
    "Sanitary Waste and Vent Piping",
    "Facility Storm Drainage",
    "Instrumentation and Control for HVAC",
    "Metal Ducts",
    "Air Terminal Units",
    "Low-Voltage Electrical Power Conductors",
    "Interior Lighting",
    "Grounding and Bonding",
    "Fire Detection and Alarm",
    "Structured Cabling",
    "Earth Moving",
    "Asphalt Paving",
    "Chain Link Fences and Gates",
    "Turf and Grasses",
    "Storm Utility Drainage Piping",
)

PART_TITLES = (
    "RELATED DOCUMENTS",
    "SUMMARY",
    "DEFINITIONS",
    "REFERENCES",
    "SUBMITTALS",
    "QUALITY ASSURANCE",
    "DELIVERY, STORAGE, AND HANDLING",
    "PROJECT CONDITIONS",
    "WARRANTY",
    "MANUFACTURERS",
    "MATERIALS",
    "ACCESSORIES",
    "FABRICATION",
    "EXAMINATION",
    "PREPARATION",
    "INSTALLATION",
    "FIELD QUALITY CONTROL",
    "ADJUSTING AND CLEANING",
    "PROTECTION",
    "SCHEDULES",
)

PROJECT_NAMES = (
    "RIVERSIDE WATER TREATMENT FACILITY",
    "NORTHGATE TRANSIT CENTER",
    "HARBORVIEW LABORATORY EXPANSION",
    "EASTFIELD MAINTENANCE DEPOT",
    "CEDAR RIDGE COMMUNITY LIBRARY",
    "SOUTHPORT TERMINAL UPGRADES",
)

_BODY_SENTENCES = (
    "Provide labor, materials, and equipment required to complete the work of this section.",
    "Comply with governing codes and referenced standards in effect at the project site.",
    "Coordinate the work with adjacent trades before fabrication begins.",
    "Submit product data and shop drawings for review prior to ordering materials.",
    "Store materials off the ground in a dry, ventilated location.",
    "Field verify dimensions and conditions before proceeding with installation.",
    "Remove debris from the work area at the end of each shift.",
    "Protect finished surfaces from damage until substantial completion.",
    "Repair or replace work found defective at no additional cost to the owner.",
    "Maintain one copy of approved submittals at the project site.",
    "Install work plumb, level, and true to line within specified tolerances.",
    "Provide manufacturer certificates confirming compliance with specified requirements.",
)

_PART_WORDS = ("GENERAL", "PRODUCTS", "EXECUTION")

TOC_MARKER = "TABLE OF CONTENTS"
TOC_MARKER_CONTINUED = "TABLE OF CONTENTS (CONTINUED)"


@dataclass(frozen=True)
class NoiseSpec:
    dot_leader_prob: float = 0.0
    trailing_pageno_prob: float = 0.0
    header_footer_prob: float = 0.0
    blank_page_prob: float = 0.0
    # Corrupts the emitted prediction fixture only, never the gold index.
    title_corruption_prob: float = 0.0

    def __post_init__(self):
        for name in (
            "dot_leader_prob",
            "trailing_pageno_prob",
            "header_footer_prob",
            "blank_page_prob",
            "title_corruption_prob",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantViolation(f"{name} must be in [0, 1], got {value}")

    def to_jsonable(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CorpusSpec:
    seed: int
    format: FormatKind = FormatKind.FORMAT_B
    n_headings: tuple[int, int] = (3, 12)
    subheadings_per_heading: tuple[int, int] = (2, 8)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    n_cover_pages: tuple[int, int] = (1, 2)
    n_body_pages: tuple[int, int] = (5, 30)
    toc_lines_per_page: int = 40

    def __post_init__(self):
        for name in ("n_headings", "subheadings_per_heading", "n_cover_pages", "n_body_pages"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise InvariantViolation(f"{name} range ({lo}, {hi}) is empty")
        if self.n_headings[0] < 1:
            raise InvariantViolation("documents need at least one heading")
        if self.toc_lines_per_page < 1:
            raise InvariantViolation("toc_lines_per_page must be positive")


@dataclass(frozen=True)
class Corruption:
    field: str  # "ht" or "sht"
    heading_index: int
    subheading_index: int | None
    original: str
    corrupted: str

    def to_jsonable(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class GeneratedDocument:
    document: PagedDocument
    gold_index: TocIndex
    gold_labels: tuple[PageLabel, ...]
    predicted_index: TocIndex
    corruptions: tuple[Corruption, ...]

    @property
    def toc_page_numbers(self) -> tuple[int, ...]:
        return tuple(label.page_number for label in self.gold_labels)


def _build_gold_index(rng: random.Random, spec: CorpusSpec) -> TocIndex:
    n_headings = rng.randint(*spec.n_headings)
    division_start = rng.randrange(len(DIVISIONS))
    topic_start = rng.randrange(len(SECTION_TOPICS))
    part_start = rng.randrange(len(PART_TITLES))

    headings: list[Heading] = []
    topic_cursor = topic_start
    part_cursor = part_start
    for i in range(n_headings):
        code, division_name = DIVISIONS[(division_start + i) % len(DIVISIONS)]
        n_subs = rng.randint(*spec.subheadings_per_heading)
        subs: list[Subheading] = []
        if spec.format is FormatKind.FORMAT_B:
            hn, ht = code, division_name
            for j in range(n_subs):
                mid = 5 + 5 * (j % 19)
                subs.append(
                    Subheading(
                        shn=f"{code}{mid:02d}00",
                        sht=SECTION_TOPICS[topic_cursor % len(SECTION_TOPICS)],
                    )
                )
                topic_cursor += 1
        else:
            hn = f"{code}{1 + i % 9}00"
            ht = SECTION_TOPICS[topic_cursor % len(SECTION_TOPICS)].upper()
            topic_cursor += 1
            for j in range(n_subs):
                subs.append(
                    Subheading(
                        shn=f"{1 + j // 4}.{1 + j % 4}",
                        sht=PART_TITLES[part_cursor % len(PART_TITLES)],
                    )
                )
                part_cursor += 1
        headings.append(Heading(hn=hn, ht=ht, subheadings=tuple(subs)))
    return TocIndex(headings=tuple(headings))


def _render_entry_lines(rng: random.Random, spec: CorpusSpec, index: TocIndex) -> list[str]:
    """Render gold entries through the grammar shapes, with decorations."""
    noise = spec.noise
    lines: list[str] = []
    fake_page = rng.randint(1, 5)

    def decorate(text: str) -> str:
        nonlocal fake_page
        fake_page += rng.randint(1, 9)
        decorated = text
        if rng.random() < noise.dot_leader_prob:
            decorated += " " + "." * rng.randint(3, 12)
        if rng.random() < noise.trailing_pageno_prob:
            decorated += f" {fake_page}"
        return decorated

    for heading in index.headings:
        if spec.format is FormatKind.FORMAT_B:
            lines.append(decorate(f"DIVISION {heading.hn} - {heading.ht}"))
            for sub in heading.subheadings:
                spaced = f"{sub.shn[0:2]} {sub.shn[2:4]} {sub.shn[4:6]}"
                lines.append(decorate(f"{spaced} {sub.sht}"))
        else:
            lines.append(decorate(f"SECTION {heading.hn} - {heading.ht}"))
            for sub in heading.subheadings:
                lines.append(decorate(f"{sub.shn} {sub.sht}"))
    return lines


def _cover_page(rng: random.Random, project: str, volume: int) -> list[str]:
    return [
        "",
        project,
        "PROJECT MANUAL",
        f"VOLUME {volume}",
        "",
        f"PROJECT NO. {rng.randint(1000, 9999)}",
        "ISSUED FOR CONSTRUCTION",
    ]


def _body_page(rng: random.Random) -> list[str]:
    lines: list[str] = []
    part = rng.randint(1, 3)
    lines.append(f"PART {part} - {_PART_WORDS[part - 1]}")
    lines.append("")
    n_clauses = rng.randint(3, 6)
    for i in range(n_clauses):
        lines.append(f"{part}.{i + 1:02d} {PART_TITLES[rng.randrange(len(PART_TITLES))]}")
        for _ in range(rng.randint(1, 4)):
            lines.append(rng.choice(_BODY_SENTENCES))
        lines.append("")
    return lines


def _paginate_toc(rng: random.Random, spec: CorpusSpec, entry_lines: list[str], project: str) -> list[list[str]]:
    noise = spec.noise
    per_page = spec.toc_lines_per_page
    chunks = [entry_lines[i : i + per_page] for i in range(0, len(entry_lines), per_page)]
    pages: list[list[str]] = []
    for ordinal, chunk in enumerate(chunks, start=1):
        lines: list[str] = []
        if rng.random() < noise.header_footer_prob:
            lines.append(project)
        lines.append(TOC_MARKER if ordinal == 1 else TOC_MARKER_CONTINUED)
        lines.append("")
        lines.extend(chunk)
        if rng.random() < noise.header_footer_prob:
            lines.append(f"Issued for Construction - Page {ordinal}")
        pages.append(lines)
    return pages


_DEFAULT_TITLE_POLICY = MatchPolicy()


def _corrupt_title(rng: random.Random, original: str, pool) -> str:
    for _ in range(10):
        candidate = rng.choice(pool)
        if _DEFAULT_TITLE_POLICY.normalize_title(candidate) != _DEFAULT_TITLE_POLICY.normalize_title(original):
            return candidate
    return original + " (REVISED)"


def _corrupt_prediction(
    spec: CorpusSpec, gold: TocIndex
) -> tuple[TocIndex, tuple[Corruption, ...]]:
    """Apply title corruptions to a copy of the gold index.

    Uses a random stream independent of document rendering so the document
    bytes do not depend on the corruption probability.
    """
    rng = random.Random(f"{spec.seed}:corruption")
    prob = spec.noise.title_corruption_prob
    if spec.format is FormatKind.FORMAT_B:
        ht_pool = tuple(name for _, name in DIVISIONS)
        sht_pool = SECTION_TOPICS
    else:
        ht_pool = tuple(topic.upper() for topic in SECTION_TOPICS)
        sht_pool = PART_TITLES

    corruptions: list[Corruption] = []
    headings: list[Heading] = []
    for i, heading in enumerate(gold.headings):
        ht = heading.ht
        if rng.random() < prob:
            ht = _corrupt_title(rng, heading.ht, ht_pool)
            corruptions.append(Corruption("ht", i, None, heading.ht, ht))
        subs: list[Subheading] = []
        for j, sub in enumerate(heading.subheadings):
            sht = sub.sht
            if rng.random() < prob:
                sht = _corrupt_title(rng, sub.sht, sht_pool)
                corruptions.append(Corruption("sht", i, j, sub.sht, sht))
            subs.append(Subheading(shn=sub.shn, sht=sht))
        headings.append(Heading(hn=heading.hn, ht=ht, subheadings=tuple(subs)))
    return TocIndex(headings=tuple(headings)), tuple(corruptions)


def generate(spec: CorpusSpec) -> GeneratedDocument:
    """Generate one document deterministically from ``spec.seed``."""
    rng = random.Random(spec.seed)
    project = PROJECT_NAMES[rng.randrange(len(PROJECT_NAMES))]

    gold_index = _build_gold_index(rng, spec)
    entry_lines = _render_entry_lines(rng, spec, gold_index)
    toc_pages = _paginate_toc(rng, spec, entry_lines, project)

    n_cover = rng.randint(*spec.n_cover_pages)
    covers = [_cover_page(rng, project, v + 1) for v in range(n_cover)]
    n_body = rng.randint(*spec.n_body_pages)
    bodies = [_body_page(rng) for _ in range(n_body)]

    assembled: list[list[str]] = []
    toc_page_numbers: list[int] = []

    def push(lines: list[str], is_toc: bool):
        assembled.append(lines)
        if is_toc:
            toc_page_numbers.append(len(assembled))

    for cover in covers:
        push(cover, False)
        if rng.random() < spec.noise.blank_page_prob:
            push([], False)
    for toc_page in toc_pages:
        push(toc_page, True)
    for body in bodies:
        push(body, False)
        if rng.random() < spec.noise.blank_page_prob:
            push([], False)

    pages = tuple(
        PageText(number=i, lines=tuple(line.rstrip() for line in lines))
        for i, lines in enumerate(assembled, start=1)
    )
    document = PagedDocument(pages=pages, title=project)
    gold_labels = tuple(
        PageLabel(page_number=n, label=PageClass.TOC, score=1.0, features={})
        for n in toc_page_numbers
    )
    predicted_index, corruptions = _corrupt_prediction(spec, gold_index)
    return GeneratedDocument(
        document=document,
        gold_index=gold_index,
        gold_labels=gold_labels,
        predicted_index=predicted_index,
        corruptions=corruptions,
    )


def generate_split(spec: CorpusSpec, n_docs: int, train_fraction: float):
    """Deterministic shuffled split: ``floor(n_docs * train_fraction)`` train docs."""
    if n_docs < 2:
        raise InvariantViolation("a split needs at least two documents")
    if not 0.0 < train_fraction < 1.0:
        raise InvariantViolation("train_fraction must be strictly between 0 and 1")
    docs = [
        generate(dataclasses.replace(spec, seed=spec.seed + ordinal))
        for ordinal in range(n_docs)
    ]
    order = list(range(n_docs))
    random.Random(f"{spec.seed}:split").shuffle(order)
    n_train = math.floor(n_docs * train_fraction)
    train = [docs[i] for i in order[:n_train]]
    test = [docs[i] for i in order[n_train:]]
    return train, test


# ---------------------------------------------------------------------------
# Corpus directories
# ---------------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_corpus(spec: CorpusSpec, n_docs: int, out_dir) -> dict:
    """Emit ``n_docs`` documents (seeds ``spec.seed + ordinal``) plus manifest.

    Per document: the interchange document, gold index, gold page labels,
    corruption log, and the (possibly corrupted) prediction fixture. The
    manifest lists every file with its SHA-256.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ordinal in range(n_docs):
        child = dataclasses.replace(spec, seed=spec.seed + ordinal)
        generated = generate(child)
        stem = f"{spec.format.value.lower()}_{child.seed:06d}"

        files = {
            f"{stem}.pgdoc.json": canonical_serialize(generated.document),
            f"{stem}.toc.json": index_to_json_bytes(generated.gold_index),
            f"{stem}.labels.json": json.dumps(
                {"toc_pages": list(generated.toc_page_numbers)}, separators=(",", ":")
            ).encode("utf-8"),
            f"{stem}.pred.json": index_to_json_bytes(generated.predicted_index),
            f"{stem}.corruptions.json": json.dumps(
                [c.to_jsonable() for c in generated.corruptions],
                ensure_ascii=False,
                separators=(",", ":"),
            ).encode("utf-8"),
        }
        for name, data in files.items():
            (out / name).write_bytes(data)
        entries.append(
            {
                "stem": stem,
                "seed": child.seed,
                "format": spec.format.value,
                "doc": f"{stem}.pgdoc.json",
                "gold": f"{stem}.toc.json",
                "labels": f"{stem}.labels.json",
                "pred": f"{stem}.pred.json",
                "corruptions": f"{stem}.corruptions.json",
                "digests": {name: _sha256(data) for name, data in files.items()},
            }
        )
    manifest = {
        "format": spec.format.value,
        "base_seed": spec.seed,
        "n_docs": n_docs,
        "noise": spec.noise.to_jsonable(),
        "docs": entries,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
