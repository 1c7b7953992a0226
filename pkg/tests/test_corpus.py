import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dialect_atlas.corpus import (UNKNOWN, Document, RegionMap, Vocabulary, assign_region,
                                  build_vocabulary, corpus_stats, read_corpus, tokenize,
                                  tokenize_tagged, write_corpus)

US_BOX = {"resolution": "country", "regions": [{"id": "US", "bbox": [-125, 25, -66, 49]},
                                               {"id": "UK", "bbox": [-8, 50, 2, 59]}]}


@pytest.mark.parametrize("text, expected", [
    ("", []),
    ("Check https://t.co/x my FLAT!!", ["check", "my", "flat"]),
    ("@bob loves #football", ["loves", "football"]),
    ("www.example.com rocks", ["rocks"]),
    ("bbc.co.uk/news is fine", ["is", "fine"]),
    ("I'm 100 % sure 😀", ["im", "sure"]),
    ("state-of-the-art", ["state", "of", "the", "art"]),
    ("2019 de_facto", ["de", "facto"]),
])
def test_tokenize_rules(text, expected):
    assert tokenize(text) == expected


@given(st.text())
def test_tokenize_idempotent(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens


@given(st.text())
def test_tokens_lowercase_and_alphabetic(text):
    for tok in tokenize(text):
        assert tok == tok.lower()
        assert any(ch.isalpha() for ch in tok)


def test_tagged_tokens_inherit_chunk_tag():
    tokens, tags = tokenize_tagged("Big state-of-art @x flat", ["ADJ", "NOUN", "X", "NOUN"])
    assert tokens == ["big", "state", "of", "art", "flat"]
    assert tags == ["ADJ", "NOUN", "NOUN", "NOUN", "NOUN"]
    with pytest.raises(ValueError, match="chunks"):
        tokenize_tagged("a b", ["X"])


def test_document_invariants():
    with pytest.raises(ValueError, match="POS"):
        Document("a", tokens=("x", "y"), pos_tags=("N",), region_labels={"country": "US"})
    with pytest.raises(ValueError, match="together"):
        Document("a", lat=1.0)
    with pytest.raises(ValueError, match="range"):
        Document("a", lat=91.0, lon=0.0)
    with pytest.raises(ValueError, match="coordinates or a region"):
        Document("a", tokens=("x",))
    Document("ok", lat=-90.0, lon=180.0)


def test_record_round_trip(tmp_path):
    path = tmp_path / "c.ndjson"
    path.write_text(
        json.dumps({"id": 1, "text": "Hello #World", "lat": 40.7, "lon": -74.0,
                    "created_at": "2019-01-01T00:00:00Z", "region": {"country": "US"},
                    "pos": ["INTJ", "NOUN"], "user": "ignored"}) + "\n\n", encoding="utf-8")
    (doc,) = read_corpus(path)
    assert doc.tokens == ("hello", "world")
    assert doc.pos_tags == ("INTJ", "NOUN")
    assert doc.region_labels == {"country": "US"}
    assert doc.timestamp == "2019-01-01T00:00:00Z"
    out = tmp_path / "out.ndjson"
    write_corpus([doc], out)
    assert read_corpus(out) == [doc]


def test_bad_line_reports_location(tmp_path):
    path = tmp_path / "c.ndjson"
    path.write_text('{"id": "a", "text": "x"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match=r"c.ndjson:1"):
        read_corpus(path)


def test_vocabulary_counts_and_filtering():
    vocab = build_vocabulary([["a", "a", "a", "b"]], min_freq=2)
    assert vocab.id_to_token == ("a",)
    assert vocab.frequency.tolist() == [3]
    assert vocab.total_tokens == 4
    assert vocab.encode(["b", "a", "c", "a"]).tolist() == [0, 0]
    with pytest.raises(ValueError, match="no tokens survive min_freq"):
        build_vocabulary([["a"]], min_freq=2)
    with pytest.raises(KeyError, match="not in vocabulary"):
        vocab["b"]


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=8), min_size=1),
       st.integers(1, 4))
def test_vocabulary_invariants(lists, min_freq):
    if sum(map(len, lists)) == 0:
        return
    try:
        vocab = build_vocabulary(lists, min_freq)
    except ValueError:
        return
    assert (vocab.frequency >= min_freq).all()
    assert vocab.frequency.sum() <= vocab.total_tokens
    for i, tok in enumerate(vocab.id_to_token):
        assert vocab.token_to_id[tok] == i
    assert list(vocab.frequency) == sorted(vocab.frequency, reverse=True)


def test_min_freq_one_keeps_everything():
    lists = [["x", "y"], ["z", "x"]]
    assert set(build_vocabulary(lists, 1).id_to_token) == {"x", "y", "z"}


def test_vocabulary_file_round_trip(tmp_path):
    vocab = build_vocabulary([list("aabbbc")], 1)
    vocab.save(tmp_path / "v.tsv")
    again = Vocabulary.load(tmp_path / "v.tsv")
    assert again.id_to_token == vocab.id_to_token
    assert np.array_equal(again.frequency, vocab.frequency)
    assert (again.min_freq, again.total_tokens) == (1, 6)


def test_filter_document_keeps_tags_aligned():
    vocab = build_vocabulary([["a", "a", "b"]], 2)
    doc = Document("d", tokens=("a", "b", "a"), pos_tags=("X", "Y", "Z"), region_labels={"c": "r"})
    kept = vocab.filter_document(doc)
    assert kept.tokens == ("a", "a")
    assert kept.pos_tags == ("X", "Z")


def test_assign_region_rules():
    rmap = RegionMap.from_dict(US_BOX)
    labelled = Document("a", lat=40.7, lon=-74.0, region_labels={"country": "UK"})
    assert assign_region(labelled, "country", rmap) == "UK"
    nyc = Document("b", lat=40.7, lon=-74.0)
    assert assign_region(nyc, "country", rmap) == "US"
    assert assign_region(Document("c", lat=0.0, lon=0.0), "country", rmap) == UNKNOWN
    with pytest.raises(ValueError, match="no region map"):
        assign_region(nyc, "state", rmap)


def test_label_never_consults_coordinates():
    # no map at all: the label alone must suffice
    doc = Document("a", lat=0.0, lon=0.0, region_labels={"country": "US"})
    assert assign_region(doc, "country", None) == "US"


def test_region_map_first_match_and_polygons(tmp_path):
    data = {"resolution": "r", "regions": [
        {"id": "A", "polygon": [[0, 0], [2, 0], [2, 2], [0, 2]]},
        {"id": "B", "bbox": [1, 1, 3, 3]},
    ]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(data))
    rmap = RegionMap.load(path)
    assert rmap.locate(1.5, 1.5) == "A"
    assert rmap.locate(2.5, 2.5) == "B"
    assert rmap.locate(2.0, 0.0) == "A"  # boundary counts as inside
    assert RegionMap.from_dict(rmap.to_dict()).locate(2.5, 2.5) == "B"
    with pytest.raises(ValueError, match="duplicate"):
        RegionMap.from_dict({"resolution": "r", "regions": [{"id": "A", "bbox": [0, 0, 1, 1]}] * 2})
    with pytest.raises(ValueError, match="reserved"):
        RegionMap.from_dict({"resolution": "r", "regions": [{"id": UNKNOWN, "bbox": [0, 0, 1, 1]}]})


def test_corpus_stats(make_doc):
    docs = [make_doc(0, "a b c".split(), "US"), make_doc(1, "a d e".split(), "US")]
    stats = corpus_stats(docs, "country")
    assert stats.docs == {"US": 2}
    assert stats.tokens == {"US": 6}
    assert stats.terms == {"US": 5}
    empty = corpus_stats([], "country")
    assert (empty.total_docs, empty.total_tokens, empty.total_terms) == (0, 0, 0)


def test_corpus_stats_totals_include_unknown():
    rmap = RegionMap.from_dict(US_BOX)
    docs = [Document("a", tokens=("x", "y"), lat=40.0, lon=-100.0),
            Document("b", tokens=("y",), lat=0.0, lon=0.0),
            Document("c", tokens=("z", "z"), region_labels={"country": "UK"})]
    stats = corpus_stats(docs, "country", rmap)
    assert stats.docs == {"US": 1, "UK": 1, UNKNOWN: 1}
    assert stats.total_docs == sum(stats.docs.values())
    assert stats.total_tokens == sum(stats.tokens.values()) == 5
    assert stats.total_terms == 3
