"""Per-field exact-match scoring between a predicted index and gold.

Entries are aligned number-first: headings pair greedily on normalized
heading-number equality, leftovers pair in source order; subheadings do the
same within each paired heading. Each of the four fields (hn, ht, shn, sht)
then counts a match exactly when the paired values are equal under the
match policy. Accuracy is matched over gold total per field, with the
macro average being the plain arithmetic mean of the four.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedInput
from .tocgrammar import TocIndex

FIELDS = ("hn", "ht", "shn", "sht")

_WHITESPACE = re.compile(r"\s+")


class TitleCompare(Enum):
    CASE_INSENSITIVE_COLLAPSED_WHITESPACE = "case_insensitive_collapsed_whitespace"
    EXACT = "exact"


class NumberCompare(Enum):
    WHITESPACE_STRIPPED = "whitespace_stripped"
    EXACT = "exact"


@dataclass(frozen=True)
class MatchPolicy:
    title_compare: TitleCompare = TitleCompare.CASE_INSENSITIVE_COLLAPSED_WHITESPACE
    number_compare: NumberCompare = NumberCompare.WHITESPACE_STRIPPED

    def normalize_title(self, value: str) -> str:
        if self.title_compare is TitleCompare.EXACT:
            return value
        return _WHITESPACE.sub(" ", value).strip().casefold()

    def normalize_number(self, value: str) -> str:
        if self.number_compare is NumberCompare.EXACT:
            return value
        return _WHITESPACE.sub("", value)

    def to_jsonable(self) -> dict:
        return {
            "title_compare": self.title_compare.value,
            "number_compare": self.number_compare.value,
        }

    @classmethod
    def from_jsonable(cls, obj) -> "MatchPolicy":
        if not isinstance(obj, dict):
            raise MalformedInput("match policy must be a JSON object")
        kwargs: dict = {}
        try:
            if "title_compare" in obj:
                kwargs["title_compare"] = TitleCompare(obj["title_compare"])
            if "number_compare" in obj:
                kwargs["number_compare"] = NumberCompare(obj["number_compare"])
        except ValueError as exc:
            raise MalformedInput(f"unknown match policy value: {exc}") from exc
        return cls(**kwargs)


EXACT_POLICY = MatchPolicy(
    title_compare=TitleCompare.EXACT, number_compare=NumberCompare.EXACT
)


@dataclass
class FieldCount:
    matched: int = 0
    gold_total: int = 0
    predicted_total: int = 0

    @property
    def accuracy(self) -> float:
        if self.gold_total == 0:
            return 1.0
        return self.matched / self.gold_total


@dataclass
class EvalReport:
    counts: dict[str, FieldCount]
    unmatched: list[tuple[str, str, str | None]]
    policy: MatchPolicy

    @property
    def hn_acc(self) -> float:
        return self.counts["hn"].accuracy

    @property
    def ht_acc(self) -> float:
        return self.counts["ht"].accuracy

    @property
    def shn_acc(self) -> float:
        return self.counts["shn"].accuracy

    @property
    def sht_acc(self) -> float:
        return self.counts["sht"].accuracy

    @property
    def macro_avg(self) -> float:
        return (self.hn_acc + self.ht_acc + self.shn_acc + self.sht_acc) / 4.0

    def to_jsonable(self) -> dict:
        return {
            "hn_acc": self.hn_acc,
            "ht_acc": self.ht_acc,
            "shn_acc": self.shn_acc,
            "sht_acc": self.sht_acc,
            "macro_avg": self.macro_avg,
            "counts": {
                name: {
                    "matched": c.matched,
                    "gold_total": c.gold_total,
                    "predicted_total": c.predicted_total,
                }
                for name, c in self.counts.items()
            },
            "unmatched": [
                {"field": f, "gold": g, "predicted": p} for f, g, p in self.unmatched
            ],
            "policy": self.policy.to_jsonable(),
        }


@dataclass
class Pairing:
    """Index pairs chosen by :func:`align`; indexes are source positions."""

    heading_pairs: list[tuple[int, int]]
    subheading_pairs: dict[tuple[int, int], list[tuple[int, int]]]


def _pair_entries(gold_keys: list[str], predicted_keys: list[str]) -> list[tuple[int, int]]:
    """Greedy pairing on key equality, remainder paired in source order."""
    pairs: list[tuple[int, int]] = []
    used_pred: set[int] = set()
    unpaired_gold: list[int] = []
    for gi, key in enumerate(gold_keys):
        match = next(
            (pi for pi, pkey in enumerate(predicted_keys) if pi not in used_pred and pkey == key),
            None,
        )
        if match is None:
            unpaired_gold.append(gi)
        else:
            used_pred.add(match)
            pairs.append((gi, match))
    remaining_pred = [pi for pi in range(len(predicted_keys)) if pi not in used_pred]
    pairs.extend(zip(unpaired_gold, remaining_pred))
    return pairs


def align(predicted: TocIndex, gold: TocIndex, policy: MatchPolicy = MatchPolicy()) -> Pairing:
    """Pair gold and predicted entries, each gold entry at most once."""
    heading_pairs = _pair_entries(
        [policy.normalize_number(h.hn) for h in gold.headings],
        [policy.normalize_number(h.hn) for h in predicted.headings],
    )
    subheading_pairs: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for gi, pi in heading_pairs:
        subheading_pairs[(gi, pi)] = _pair_entries(
            [policy.normalize_number(s.shn) for s in gold.headings[gi].subheadings],
            [policy.normalize_number(s.shn) for s in predicted.headings[pi].subheadings],
        )
    return Pairing(heading_pairs=heading_pairs, subheading_pairs=subheading_pairs)


def evaluate(predicted: TocIndex, gold: TocIndex, policy: MatchPolicy = MatchPolicy()) -> EvalReport:
    """Score one predicted index against its gold annotation."""
    counts = {name: FieldCount() for name in FIELDS}
    unmatched: list[tuple[str, str, str | None]] = []

    counts["hn"].gold_total = counts["ht"].gold_total = len(gold.headings)
    counts["hn"].predicted_total = counts["ht"].predicted_total = len(predicted.headings)
    counts["shn"].gold_total = counts["sht"].gold_total = sum(
        len(h.subheadings) for h in gold.headings
    )
    counts["shn"].predicted_total = counts["sht"].predicted_total = sum(
        len(h.subheadings) for h in predicted.headings
    )

    pairing = align(predicted, gold, policy)
    paired_gold_headings = {gi for gi, _ in pairing.heading_pairs}

    for gi, pi in pairing.heading_pairs:
        g, p = gold.headings[gi], predicted.headings[pi]
        if policy.normalize_number(g.hn) == policy.normalize_number(p.hn):
            counts["hn"].matched += 1
        else:
            unmatched.append(("hn", g.hn, p.hn))
        if policy.normalize_title(g.ht) == policy.normalize_title(p.ht):
            counts["ht"].matched += 1
        else:
            unmatched.append(("ht", g.ht, p.ht))

        sub_pairs = pairing.subheading_pairs[(gi, pi)]
        paired_gold_subs = {si for si, _ in sub_pairs}
        for si, sj in sub_pairs:
            gs, ps = g.subheadings[si], p.subheadings[sj]
            if policy.normalize_number(gs.shn) == policy.normalize_number(ps.shn):
                counts["shn"].matched += 1
            else:
                unmatched.append(("shn", gs.shn, ps.shn))
            if policy.normalize_title(gs.sht) == policy.normalize_title(ps.sht):
                counts["sht"].matched += 1
            else:
                unmatched.append(("sht", gs.sht, ps.sht))
        for si, gs in enumerate(g.subheadings):
            if si not in paired_gold_subs:
                unmatched.append(("shn", gs.shn, None))
                unmatched.append(("sht", gs.sht, None))

    for gi, g in enumerate(gold.headings):
        if gi not in paired_gold_headings:
            unmatched.append(("hn", g.hn, None))
            unmatched.append(("ht", g.ht, None))
            for gs in g.subheadings:
                unmatched.append(("shn", gs.shn, None))
                unmatched.append(("sht", gs.sht, None))

    return EvalReport(counts=counts, unmatched=unmatched, policy=policy)


def evaluate_corpus(pairs, policy: MatchPolicy = MatchPolicy()) -> EvalReport:
    """Micro-aggregate document reports: pooled counts, then macro average."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("evaluate_corpus requires at least one (predicted, gold) pair")
    pooled = {name: FieldCount() for name in FIELDS}
    unmatched: list[tuple[str, str, str | None]] = []
    for predicted, gold in pairs:
        report = evaluate(predicted, gold, policy)
        for name in FIELDS:
            pooled[name].matched += report.counts[name].matched
            pooled[name].gold_total += report.counts[name].gold_total
            pooled[name].predicted_total += report.counts[name].predicted_total
        unmatched.extend(report.unmatched)
    return EvalReport(counts=pooled, unmatched=unmatched, policy=policy)
