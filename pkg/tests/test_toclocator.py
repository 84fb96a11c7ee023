import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tocindex import corpusgen
from tocindex.errors import InvariantViolation
from tocindex.pagedoc import PageText
from tocindex.toclocator import (
    ClassifierConfig,
    PageClass,
    classify_page,
    extract_features,
    locate_toc,
)

DEFAULT = ClassifierConfig()


def page(*lines, number=1):
    return PageText(number=number, lines=tuple(lines))


def test_marker_phrase_sets_marker_hit():
    features = extract_features(page("TABLE OF CONTENTS"), DEFAULT)
    assert features["marker_hit"] == 1.0


def test_marker_match_is_case_insensitive_substring():
    features = extract_features(page("Table of Contents (continued)"), DEFAULT)
    assert features["marker_hit"] == 1.0


def test_empty_page_has_all_zero_features():
    features = extract_features(page(), DEFAULT)
    assert set(features) == {
        "marker_hit",
        "numbered_line_ratio",
        "dot_leader_ratio",
        "trailing_pageno_ratio",
        "density",
    }
    assert all(value == 0.0 for value in features.values())


def test_numbered_line_ratio_counts_grammar_matches():
    lines = ["1.1 RELATED DOCUMENTS"] * 6 + ["prose here"] * 4
    features = extract_features(page(*lines), DEFAULT)
    assert features["numbered_line_ratio"] == pytest.approx(0.6)


def test_dot_leader_and_trailing_pageno_ratios():
    features = extract_features(page("a ..... 3", "plain"), DEFAULT)
    assert features["dot_leader_ratio"] == pytest.approx(0.5)
    assert features["trailing_pageno_ratio"] == pytest.approx(0.5)


def test_density_caps_at_one():
    features = extract_features(page(*["x"] * 100), DEFAULT)
    assert features["density"] == 1.0


def test_marker_with_mostly_numbered_lines_scores_toc():
    # 10 non-empty lines: the marker, one stray, eight grammar matches.
    # Default weights give 0.5 * 1 + 0.3 * 0.8 = 0.74.
    lines = ["TABLE OF CONTENTS", "stray line"] + ["1.1 RELATED DOCUMENTS"] * 8
    label = classify_page(page(*lines), DEFAULT)
    assert label.score == pytest.approx(0.74)
    assert label.score >= 0.5
    assert label.label is PageClass.TOC


def test_empty_page_is_other():
    label = classify_page(page(), DEFAULT)
    assert label.score == 0.0
    assert label.label is PageClass.OTHER


def test_zero_threshold_labels_everything_toc():
    config = ClassifierConfig(threshold=0.0)
    assert classify_page(page(), config).label is PageClass.TOC
    assert classify_page(page("anything"), config).label is PageClass.TOC


def test_classification_is_deterministic():
    lines = ("TABLE OF CONTENTS", "03 30 00 Concrete ..... 3")
    first = classify_page(page(*lines), DEFAULT)
    second = classify_page(page(*lines), DEFAULT)
    assert first == second


def test_adding_marker_line_to_unmarked_page_never_lowers_score():
    base_lines = ["1.1 RELATED DOCUMENTS", "prose", "03 30 00 Grouting ..... 4"]
    before = classify_page(page(*base_lines), DEFAULT)
    after = classify_page(page(*base_lines, "TABLE OF CONTENTS"), DEFAULT)
    assert after.score >= before.score


def test_adding_marker_line_never_downgrades_toc_label():
    # Ratio denominators shift when a line is added, so the raw score may
    # drop on a page that already carries a marker; the label may not.
    lines = ["TABLE OF CONTENTS"] + ["1.1 RELATED DOCUMENTS"] * 5
    before = classify_page(page(*lines), DEFAULT)
    after = classify_page(page(*lines, "TABLE OF CONTENTS"), DEFAULT)
    assert before.label is PageClass.TOC
    assert after.label is PageClass.TOC
    assert after.score < before.score  # documents why the label form is tested


def test_locate_toc_on_generated_corpus():
    for seed in (1, 2, 3):
        generated = corpusgen.generate(corpusgen.CorpusSpec(seed=seed))
        labels = locate_toc(generated.document, DEFAULT)
        assert tuple(l.page_number for l in labels) == generated.toc_page_numbers


def test_locate_toc_multi_page_toc():
    spec = corpusgen.CorpusSpec(seed=21, toc_lines_per_page=5)
    generated = corpusgen.generate(spec)
    labels = locate_toc(generated.document, DEFAULT)
    assert tuple(l.page_number for l in labels) == generated.toc_page_numbers
    assert len(labels) >= 2


def test_body_only_document_locates_nothing():
    generated = corpusgen.generate(corpusgen.CorpusSpec(seed=4))
    body_numbers = [
        p.number for p in generated.document.pages if p.number not in generated.toc_page_numbers
    ]
    from tocindex.pagedoc import PagedDocument

    body_pages = tuple(
        PageText(number=i, lines=generated.document.pages[n - 1].lines)
        for i, n in enumerate(body_numbers, start=1)
    )
    assert locate_toc(PagedDocument(pages=body_pages), DEFAULT) == []


def test_single_page_toc_document():
    doc_page = page("TABLE OF CONTENTS", "DIVISION 03 - CONCRETE")
    from tocindex.pagedoc import PagedDocument

    labels = locate_toc(PagedDocument(pages=(doc_page,)), DEFAULT)
    assert len(labels) == 1
    assert labels[0].page_number == 1
    assert labels[0].label is PageClass.TOC


def test_config_rejects_all_zero_weights():
    with pytest.raises(InvariantViolation):
        ClassifierConfig(feature_weights={"marker_hit": 0.0})


def test_config_rejects_non_finite_weights():
    with pytest.raises(InvariantViolation):
        ClassifierConfig(feature_weights={"marker_hit": float("nan")})


def test_config_loads_from_json_with_defaults(tmp_path):
    path = tmp_path / "classifier.json"
    path.write_text(json.dumps({"threshold": 0.25}), encoding="utf-8")
    config = ClassifierConfig.from_json_file(path)
    assert config.threshold == 0.25
    assert config.feature_weights["marker_hit"] == 0.5
    assert "TABLE OF CONTENTS" in config.marker_phrases


page_strategy = st.lists(
    st.sampled_from(
        [
            "TABLE OF CONTENTS",
            "DIVISION 03 - CONCRETE",
            "03 30 00 Cast-in-Place Concrete ..... 9",
            "1.1 RELATED DOCUMENTS",
            "plain prose line",
            "ends with 12",
            "",
        ]
    ),
    max_size=12,
)


@settings(max_examples=200)
@given(page_strategy, st.floats(min_value=0.0, max_value=1.0))
def test_threshold_law(lines, threshold):
    config = ClassifierConfig(threshold=threshold)
    label = classify_page(PageText(1, tuple(lines)), config)
    assert (label.score >= threshold) == (label.label is PageClass.TOC)
    assert 0.0 <= label.score <= 1.0
