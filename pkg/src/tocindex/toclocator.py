"""Per-page ToC classification with a transparent weighted-feature score.

Each page is scored in isolation from five text features; the page is
labeled ``TOC`` exactly when its clamped weighted sum reaches the
configured threshold. Default weights make a marker phrase ("TABLE OF
CONTENTS") sufficient on its own, and a dense page of numbered entries
with dot leaders and page references sufficient without one.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import InvariantViolation, MalformedInput
from .pagedoc import PagedDocument, PageText
from .tocgrammar import matches_any_rule


class PageClass(Enum):
    TOC = "toc"
    OTHER = "other"


DEFAULT_MARKER_PHRASES = ("TABLE OF CONTENTS", "CONTENTS", "INDEX OF SECTIONS")

DEFAULT_FEATURE_WEIGHTS: Mapping[str, float] = {
    "marker_hit": 0.5,
    "numbered_line_ratio": 0.3,
    "dot_leader_ratio": 0.1,
    "trailing_pageno_ratio": 0.1,
    "density": 0.0,
}

# A "full" page for the density feature; denser pages saturate at 1.0.
DENSITY_FULL_PAGE_LINES = 60

_DOT_LEADER = re.compile(r"\.{3,}")
_TRAILING_INT = re.compile(r"\d+\s*$")


@dataclass(frozen=True)
class ClassifierConfig:
    threshold: float = 0.5
    feature_weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_FEATURE_WEIGHTS)
    )
    marker_phrases: tuple[str, ...] = DEFAULT_MARKER_PHRASES

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvariantViolation(f"threshold must be in [0, 1], got {self.threshold}")
        if not self.feature_weights:
            raise InvariantViolation("feature_weights must not be empty")
        if any(not math.isfinite(w) for w in self.feature_weights.values()):
            raise InvariantViolation("feature weights must be finite")
        if all(w == 0 for w in self.feature_weights.values()):
            raise InvariantViolation("at least one feature weight must be nonzero")

    @classmethod
    def from_jsonable(cls, obj) -> "ClassifierConfig":
        """Build a config from parsed JSON; absent fields take defaults."""
        if not isinstance(obj, dict):
            raise MalformedInput("classifier config must be a JSON object")
        kwargs: dict = {}
        if "threshold" in obj:
            kwargs["threshold"] = float(obj["threshold"])
        if "feature_weights" in obj:
            weights = obj["feature_weights"]
            if not isinstance(weights, dict):
                raise MalformedInput('"feature_weights" must be an object')
            kwargs["feature_weights"] = {str(k): float(v) for k, v in weights.items()}
        if "marker_phrases" in obj:
            phrases = obj["marker_phrases"]
            if not isinstance(phrases, list) or any(not isinstance(p, str) for p in phrases):
                raise MalformedInput('"marker_phrases" must be an array of strings')
            kwargs["marker_phrases"] = tuple(phrases)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "ClassifierConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"classifier config is not valid JSON: {exc}") from exc
        return cls.from_jsonable(obj)


@dataclass(frozen=True)
class PageLabel:
    """Classification verdict for one page, with its contributing features."""

    page_number: int
    label: PageClass
    score: float
    features: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvariantViolation(f"score must be in [0, 1], got {self.score}")


def extract_features(page: PageText, config: ClassifierConfig) -> dict[str, float]:
    """Compute the five classifier features, each in [0, 1].

    An empty page (no non-empty lines) yields all zeros.
    """
    non_empty = [line for line in page.lines if line.strip()]
    n = len(non_empty)
    if n == 0:
        return {name: 0.0 for name in DEFAULT_FEATURE_WEIGHTS}

    lowered_markers = [phrase.lower() for phrase in config.marker_phrases]
    marker_hit = any(
        marker in line.lower() for line in non_empty for marker in lowered_markers
    )
    numbered = sum(1 for line in non_empty if matches_any_rule(line))
    dotted = sum(1 for line in non_empty if _DOT_LEADER.search(line))
    trailing = sum(1 for line in non_empty if _TRAILING_INT.search(line))
    return {
        "marker_hit": 1.0 if marker_hit else 0.0,
        "numbered_line_ratio": numbered / n,
        "dot_leader_ratio": dotted / n,
        "trailing_pageno_ratio": trailing / n,
        "density": min(n / DENSITY_FULL_PAGE_LINES, 1.0),
    }


def classify_page(page: PageText, config: ClassifierConfig) -> PageLabel:
    """Score one page and label it TOC iff the score reaches the threshold."""
    features = extract_features(page, config)
    raw = sum(weight * features.get(name, 0.0) for name, weight in config.feature_weights.items())
    score = min(max(raw, 0.0), 1.0)
    label = PageClass.TOC if score >= config.threshold else PageClass.OTHER
    return PageLabel(page_number=page.number, label=label, score=score, features=features)


def locate_toc(doc: PagedDocument, config: ClassifierConfig) -> list[PageLabel]:
    """Classify every page and return only the TOC labels, in page order."""
    return [
        label
        for label in (classify_page(page, config) for page in doc.pages)
        if label.label is PageClass.TOC
    ]
