import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from corpus import (
    RawSku,
    SyntheticSpec,
    generate_synthetic_corpus,
    load_catalog,
    qualifies_for_queries,
    read_catalog,
    select_top_queries,
    split_corpus,
    to_document,
    write_catalog,
)
from errors import CatalogError
from rouge import reward


def _write_lines(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write((record if isinstance(record, str) else json.dumps(record)) + "\n")
    return str(path)


def _record(sku_id, title="organic mushrooms", queries=(), **extra):
    record = {
        "sku_id": sku_id,
        "title": title,
        "description": "Fresh brown mushrooms. Great in soup.",
        "bullets": ["Non-GMO"],
        "queries": [{"text": text, "clicks": clicks} for text, clicks in queries],
    }
    record.update(extra)
    return record


@pytest.mark.parametrize("queries, limit, expected", [
    ([("soup", 3), ("mushroom", 7)], 5, ["mushroom", "soup"]),
    ([("a", 2), ("b", 2)], 1, ["a"]),
    ([("x", 1), ("x", 4), ("y", 3)], 2, ["x", "y"]),
    ([], 5, []),
    ([("Soup!", 1), ("soup", 1), ("stew", 1)], 5, ["soup", "stew"]),
])
def test_select_top_queries_examples(queries, limit, expected):
    assert select_top_queries(queries, limit) == expected


@given(st.lists(st.tuples(st.sampled_from(["soup", "Soup", "stew", "rice bowl", "peas"]),
                          st.integers(min_value=0, max_value=9)), max_size=12).flatmap(
    lambda qs: st.tuples(st.just(qs), st.permutations(qs))))
def test_select_top_queries_ignores_input_order(pair):
    original, permuted = pair
    assert select_top_queries(original, 3) == select_top_queries(permuted, 3)


def test_reference_sizes_per_mode(tmp_path):
    nine = [(f"query {chr(ord('a') + i)}", 10 - i) for i in range(9)]
    path = _write_lines(tmp_path / "catalog.jsonl", [
        _record("two", queries=[("mushroom soup", 4), ("brown mushrooms", 2)]),
        _record("nine", queries=nine),
    ])
    with_queries = {d.sku_id: d for d in load_catalog(path, "title_plus_queries")}
    assert len(with_queries["two"].reference.sentences) == 3
    assert len(with_queries["nine"].reference.sentences) == 6
    assert with_queries["nine"].reference.sentences[1] == ("query", "a")
    for doc in load_catalog(path, "title_only"):
        assert doc.reference.sentences == (("organic", "mushrooms"),)


def test_document_sentence_order(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [_record("one")])
    doc = load_catalog(path)[0]
    assert doc.sentences == (("fresh", "brown", "mushrooms"), ("great", "in", "soup"), ("non-gmo",))
    assert doc.title == ("organic", "mushrooms")


def test_malformed_line_names_line_number(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [_record("ok"), "{not json"])
    with pytest.raises(CatalogError) as info:
        read_catalog(path)
    assert info.value.line_number == 2
    assert "line 2" in str(info.value)


def test_duplicate_sku_is_rejected(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [_record("dup"), _record("dup")])
    with pytest.raises(CatalogError) as info:
        read_catalog(path)
    assert info.value.sku_id == "dup"
    assert "dup" in str(info.value)


def test_bad_clicks_are_rejected(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [_record("neg", queries=[("soup", -1)])])
    with pytest.raises(CatalogError):
        read_catalog(path)


def test_empty_title_and_unengaged_records_are_skipped(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [
        _record("blank", title="  !! "),
        _record("quiet", queries=[("soup", 0)]),
        _record("clicked", queries=[("soup", 1)]),
    ])
    assert [d.sku_id for d in load_catalog(path, "title_only")] == ["quiet", "clicked"]
    assert [d.sku_id for d in load_catalog(path, "title_plus_queries")] == ["clicked"]


def test_records_without_sentences_are_skipped(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [
        _record("ok", bullets=[]),
        _record("bare", title="sea salt", description="", bullets=[]),
        _record("punctuation", description=" ... ", bullets=["  "]),
    ])
    assert [d.sku_id for d in load_catalog(path, "title_only")] == ["ok"]


def test_qualifies_for_queries_threshold():
    raw = RawSku(sku_id="x", title="t", description="d", queries=(("soup", 2),))
    assert qualifies_for_queries(raw, 2)
    assert not qualifies_for_queries(raw, 3)


def test_unknown_mode_is_rejected(tmp_path):
    path = _write_lines(tmp_path / "catalog.jsonl", [_record("one")])
    with pytest.raises(CatalogError):
        load_catalog(path, "title_and_reviews")


def test_label_count_must_match_sentences():
    raw = RawSku(sku_id="x", title="soup", description="Hot soup. Cold soup.", relevance_labels=(True,))
    with pytest.raises(CatalogError):
        to_document(raw, "title_only")


def test_write_then_read_keeps_every_field(tmp_path, synthetic_skus):
    path = str(tmp_path / "catalog.jsonl")
    write_catalog(synthetic_skus, path)
    assert read_catalog(path) == synthetic_skus

    again = str(tmp_path / "again.jsonl")
    write_catalog(read_catalog(path), again)
    assert read_catalog(again) == synthetic_skus


def test_synthetic_corpus_is_deterministic(tmp_path):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_catalog(generate_synthetic_corpus(seed=7, num_docs=25), str(first))
    write_catalog(generate_synthetic_corpus(seed=7, num_docs=25), str(second))
    assert first.read_bytes() == second.read_bytes()


def test_synthetic_docs_have_three_planted_sentences(synthetic_docs):
    for doc in synthetic_docs:
        assert len(doc) == 10
        assert sum(doc.relevance_labels) == 3


@pytest.mark.parametrize("mode", ["title_only", "title_plus_queries"])
def test_planted_sentences_outscore_every_distractor(synthetic_skus, mode):
    for raw in synthetic_skus:
        doc = to_document(raw, mode)
        refs = doc.reference.sentences
        planted = [reward([s], refs).mean_f1 for s, rel in zip(doc.sentences, doc.relevance_labels) if rel]
        distractors = [reward([s], refs).mean_f1 for s, rel in zip(doc.sentences, doc.relevance_labels) if not rel]
        assert min(planted) > max(distractors), doc.sku_id


def test_synthetic_spec_is_validated():
    with pytest.raises(CatalogError):
        generate_synthetic_corpus(seed=1, num_docs=3, spec=SyntheticSpec(sentences_per_doc=2, planted_per_doc=3))
    with pytest.raises(CatalogError):
        generate_synthetic_corpus(seed=1, num_docs=0)


def test_split_corpus_is_disjoint_and_seeded(synthetic_docs):
    train, held = split_corpus(synthetic_docs, held_out=10, seed=3)
    assert len(train) == 30 and len(held) == 10
    assert not {d.sku_id for d in train} & {d.sku_id for d in held}
    again_train, again_held = split_corpus(synthetic_docs, held_out=10, seed=3)
    assert [d.sku_id for d in again_held] == [d.sku_id for d in held]
    with pytest.raises(CatalogError):
        split_corpus(synthetic_docs, held_out=40, seed=3)
