import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tocindex.errors import InvariantViolation, MalformedInput
from tocindex.pagedoc import (
    MAX_LINE_CHARS,
    PagedDocument,
    PageText,
    canonical_serialize,
    ingest_paged_json,
    ingest_plain_text,
    normalize_lines,
)


def test_minimal_document_ingests():
    doc = ingest_paged_json(b'{"pages":[{"number":1,"lines":["TABLE OF CONTENTS"]}]}')
    assert len(doc.pages) == 1
    assert doc.pages[0].lines == ("TABLE OF CONTENTS",)
    assert doc.title is None


def test_empty_pages_is_malformed():
    with pytest.raises(MalformedInput):
        ingest_paged_json(b'{"pages":[]}')


def test_missing_pages_is_malformed():
    with pytest.raises(MalformedInput):
        ingest_paged_json(b"{}")


def test_not_json_is_malformed():
    with pytest.raises(MalformedInput):
        ingest_paged_json(b"not json")


def test_not_utf8_is_malformed():
    with pytest.raises(MalformedInput):
        ingest_paged_json(b'\xff\xfe{"pages":[]}')


def test_non_contiguous_page_numbers_violate_invariant():
    body = b'{"pages":[{"number":1,"lines":[]},{"number":3,"lines":[]}]}'
    with pytest.raises(InvariantViolation):
        ingest_paged_json(body)


def test_identical_bytes_get_identical_doc_id():
    body = b'{"pages":[{"number":1,"lines":["a"]},{"number":2,"lines":[]}]}'
    assert ingest_paged_json(body).doc_id == ingest_paged_json(body).doc_id


def test_supplied_doc_id_is_ignored():
    plain = b'{"pages":[{"number":1,"lines":["a"]}]}'
    tagged = b'{"doc_id":"bogus","pages":[{"number":1,"lines":["a"]}]}'
    assert ingest_paged_json(plain).doc_id == ingest_paged_json(tagged).doc_id


def test_key_order_does_not_change_doc_id():
    a = b'{"title":"t","pages":[{"number":1,"lines":["x"]}]}'
    b = b'{"pages":[{"lines":["x"],"number":1}],"title":"t"}'
    assert ingest_paged_json(a).doc_id == ingest_paged_json(b).doc_id


def test_plain_text_splits_on_form_feed_line():
    doc = ingest_plain_text("a\n\x0c\nb")
    assert [list(p.lines) for p in doc.pages] == [["a"], ["b"]]


def test_plain_text_without_delimiter_is_one_page():
    doc = ingest_plain_text("a\nb")
    assert len(doc.pages) == 1
    assert doc.pages[0].lines == ("a", "b")


def test_empty_plain_text_is_malformed():
    with pytest.raises(MalformedInput):
        ingest_plain_text("")


def test_unicode_title_survives_round_trip():
    doc = PagedDocument(pages=(PageText(1, ("ü",)),), title="Überbau")
    again = ingest_paged_json(canonical_serialize(doc))
    assert again.title == "Überbau"
    assert again == doc


def test_normalization_splits_embedded_newlines_and_strips():
    assert normalize_lines(["a\r\nb  ", ""]) == ("a", "b", "")


def test_long_lines_hard_wrap():
    lines = normalize_lines(["x" * (MAX_LINE_CHARS + 10)])
    assert [len(l) for l in lines] == [MAX_LINE_CHARS, 10]


def test_page_text_rejects_crlf():
    with pytest.raises(InvariantViolation):
        PageText(1, ("bad\nline",))


line_text = st.text(
    alphabet=st.characters(blacklist_characters="\r\n", blacklist_categories=("Cs",)),
    max_size=60,
).map(lambda s: s.rstrip())

page_strategy = st.lists(line_text, max_size=8)
doc_strategy = st.builds(
    lambda pages, title: PagedDocument(
        pages=tuple(PageText(i, tuple(lines)) for i, lines in enumerate(pages, start=1)),
        title=title,
    ),
    st.lists(page_strategy, min_size=1, max_size=5),
    st.none() | line_text.filter(lambda s: "\r" not in s and "\n" not in s),
)


@settings(max_examples=200)
@given(doc_strategy)
def test_round_trip_property(doc):
    again = ingest_paged_json(canonical_serialize(doc))
    assert again == doc
    assert again.doc_id == doc.doc_id


@settings(max_examples=200)
@given(doc_strategy)
def test_canonical_bytes_are_stable(doc):
    assert canonical_serialize(doc) == canonical_serialize(
        ingest_paged_json(canonical_serialize(doc))
    )


@settings(max_examples=100)
@given(st.text(max_size=200))
def test_ingested_lines_are_clean(text):
    payload = json.dumps({"pages": [{"number": 1, "lines": [text]}]}).encode()
    doc = ingest_paged_json(payload)
    for line in doc.pages[0].lines:
        assert "\r" not in line and "\n" not in line
        assert line == line.rstrip()
