"""Ingestion, validation, slicing, and round-trip behavior of the data model."""

import pytest

from consultrank.corpus import (
    ActionType,
    CorpusError,
    dump_corpus,
    load_corpus,
    slice_before,
)
from helpers import buy, click, consult, corpus_from, item, search, write_jsonl

ITEMS = [
    item("i1", "gaming laptop", ["16gb", "silver"]),
    item("i2", "folding phone"),
    item("i3", "travel tripod"),
]


def test_items_without_events_yield_no_users(tmp_path):
    corpus = corpus_from(tmp_path, ITEMS, [])
    assert len(corpus.items) == 3
    assert corpus.users == {}


def test_search_counts_as_interaction(tmp_path):
    events = [
        search("u1", 10, "gaming laptop", "i1"),
        consult("u1", 5, "c1", "which laptop is best", "the gaming laptop"),
        click("u1", 11, "i1"),
        click("u1", 12, "i2"),
    ]
    corpus = corpus_from(tmp_path, ITEMS, events)
    h = corpus.users["u1"]
    assert len(h.searches) == 1
    assert len(h.consultations) == 1
    assert len(h.interactions) == 3
    assert sum(1 for a in h.interactions if a.action_type is ActionType.SEARCH) == 1


def test_buy_without_item_rejected(tmp_path):
    bad = {"user": "u1", "type": "buy", "ts_hours": 4}
    with pytest.raises(CorpusError, match="events.jsonl:1"):
        corpus_from(tmp_path, ITEMS, [bad])


def test_dangling_item_reference_rejected(tmp_path):
    with pytest.raises(CorpusError, match="missing"):
        corpus_from(tmp_path, ITEMS, [click("u1", 4, "missing")])
    with pytest.raises(CorpusError, match="ghost"):
        corpus_from(tmp_path, ITEMS, [search("u1", 4, "anything", "ghost")])


def test_duplicate_consultation_id_rejected(tmp_path):
    events = [consult("u1", 1, "c1", "hello"), consult("u1", 2, "c1", "again")]
    with pytest.raises(CorpusError, match="duplicate consultation id"):
        corpus_from(tmp_path, ITEMS, events)


def test_duplicate_item_id_rejected(tmp_path):
    with pytest.raises(CorpusError, match="duplicate item id"):
        corpus_from(tmp_path, ITEMS + [item("i1", "imposter")], [])


def test_invalid_json_reports_line_number(tmp_path):
    items_path = tmp_path / "items.jsonl"
    events_path = tmp_path / "events.jsonl"
    write_jsonl(items_path, ITEMS)
    events_path.write_text('{"user": "u1", "type": "click"\n', encoding="utf-8")
    with pytest.raises(CorpusError, match="events.jsonl:1"):
        load_corpus(items_path, events_path)


def test_unknown_event_type_rejected(tmp_path):
    with pytest.raises(CorpusError, match="unknown event type"):
        corpus_from(tmp_path, ITEMS, [{"user": "u1", "type": "hover", "ts_hours": 1}])


def test_out_of_order_events_are_time_sorted(tmp_path):
    events = [
        click("u1", 30, "i1"),
        consult("u1", 20, "c2", "later words"),
        consult("u1", 10, "c1", "earlier words"),
        click("u1", 5, "i2"),
    ]
    h = corpus_from(tmp_path, ITEMS, events).users["u1"]
    assert [c.id for c in h.consultations] == ["c1", "c2"]
    assert [a.timestamp for a in h.interactions] == [5, 30]


def test_fractional_hours_are_floored(tmp_path):
    events = [click("u1", 7.9, "i1")]
    h = corpus_from(tmp_path, ITEMS, events).users["u1"]
    assert h.interactions[0].timestamp == 7


def test_negative_timestamp_rejected(tmp_path):
    with pytest.raises(CorpusError, match="non-negative"):
        corpus_from(tmp_path, ITEMS, [click("u1", -3, "i1")])


def test_slice_before_boundaries(tmp_path):
    events = [
        consult("u1", 10, "c1", "one"),
        consult("u1", 20, "c2", "two"),
        click("u1", 15, "i1"),
        click("u1", 25, "i2"),
    ]
    h = corpus_from(tmp_path, ITEMS, events).users["u1"]

    before, after = slice_before(h, 5)
    assert before == [] and len(after) == 2

    before, after = slice_before(h, 99)
    assert len(before) == 2 and after == []

    before, after = slice_before(h, 20)
    assert [c.id for c in before] == ["c1"]
    assert [a.timestamp for a in after] == [25]


def test_round_trip_is_identity(tmp_path):
    events = [
        search("u2", 40, "folding phone", "i2"),
        consult("u1", 5, "c1", "which laptop", "a gaming one"),
        buy("u1", 50, "i1"),
        click("u2", 41, "i2"),
        consult("u2", 39, "c9", "phones?", ""),
        search("u1", 45, "gaming laptop 16gb", "i1"),
    ]
    first = corpus_from(tmp_path, ITEMS, events)
    dump_corpus(first, tmp_path / "items2.jsonl", tmp_path / "events2.jsonl")
    second = load_corpus(tmp_path / "items2.jsonl", tmp_path / "events2.jsonl")
    assert first == second
