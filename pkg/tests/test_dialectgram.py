import csv
import json

import numpy as np
import pytest

from dialect_atlas._common import manhattan
from dialect_atlas.corpus import UNKNOWN, Document, RegionMap, build_vocabulary
from dialect_atlas.dialectgram import (CHOROPLETH_HEADER, DialectGram, SenseUsage,
                                       build_region_index, compose_region_embedding,
                                       dialectgram_score, export_choropleth, sense_proportions,
                                       sense_usage, write_choropleth_csv,
                                       write_choropleth_geojson)
from dialect_atlas.synth import split_region_map


def doc(i, tokens, region, lat=None, lon=None):
    labels = {"country": region} if region else {}
    return Document(str(i), tokens=tuple(tokens), region_labels=labels, lat=lat, lon=lon)


def test_index_positions():
    docs = [doc(0, ["a", "b", "a"], "US")]
    vocab = build_vocabulary([d.tokens for d in docs], 1)
    index = build_region_index(docs, vocab, "country")
    assert index.regions == ["US"]
    assert index.positions("US", vocab["a"]) == [(0, 0), (0, 2)]
    with pytest.raises(KeyError):
        index.positions("UK", 0)


def test_empty_corpus_gives_empty_index():
    vocab = build_vocabulary([["a"]], 1)
    index = build_region_index([], vocab, "country")
    assert index.regions == [] and index.occurrences == {}


def test_unresolvable_documents_go_to_unknown():
    rmap = RegionMap.from_dict({"resolution": "country",
                                "regions": [{"id": "US", "bbox": [-125, 25, -66, 49]}]})
    docs = [doc(0, ["a"], None, 40.0, -100.0), doc(1, ["a", "a"], None, 0.0, 0.0)]
    vocab = build_vocabulary([d.tokens for d in docs], 1)
    index = build_region_index(docs, vocab, "country", rmap)
    assert index.regions == ["US", UNKNOWN]
    assert len(index.positions(UNKNOWN, 0)) == 2


def test_all_occurrences_one_sense_returns_that_vector(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    model.sense_stats_[0] = [50.0, 0.0]
    model.sense_threshold = 0.05  # only sense 0 is active
    docs = [doc(0, ["w0", "w1", "w0"], "US")]
    index = build_region_index(docs, model.vocabulary_, "country")
    emb, usage = compose_region_embedding(model, index, "w0", "US")
    assert usage.counts.tolist() == [2.0, 0.0] and usage.n == 2
    assert np.array_equal(emb, model.sense_in_[0, 0].astype(np.float64))


def test_weighted_average_and_prior_fallback(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    model.sense_stats_[0] = [3.0, 1.0]
    usage = SenseUsage("w0", "US", np.array([3.0, 1.0]), model.sense_prior("w0"), 4, 2)
    from dialect_atlas.dialectgram import usage_embedding
    v = model.sense_in_[0].astype(np.float64)
    np.testing.assert_allclose(usage_embedding(model, usage), 0.75 * v[0] + 0.25 * v[1], atol=1e-15)
    empty = SenseUsage("w0", "UK", np.zeros(2), model.sense_prior("w0"), 0, 0)
    assert empty.empty
    np.testing.assert_allclose(usage_embedding(model, empty), model.sense_prior("w0") @ v, atol=1e-15)


def test_zero_occurrence_region_uses_priors(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    model.sense_stats_[0] = [3.0, 1.0]
    docs = [doc(0, ["w0", "w1"], "US"), doc(1, ["w2", "w1"], "UK")]
    index = build_region_index(docs, model.vocabulary_, "country")
    emb, usage = compose_region_embedding(model, index, "w0", "UK")
    assert usage.empty
    np.testing.assert_allclose(emb, model.sense_prior("w0") @ model.sense_in_[0].astype(float))


def test_ties_go_to_lowest_sense(make_toy_adagram, monkeypatch):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    monkeypatch.setattr(model, "disambiguate", lambda w, ctx: np.array([0.5, 0.5]))
    index = build_region_index([doc(0, ["w0", "w1"], "US")], model.vocabulary_, "country")
    usage = sense_usage(model, index, "w0", "US")
    assert usage.counts.tolist() == [1.0, 0.0]


def test_unknown_word_raises(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4])
    index = build_region_index([doc(0, ["w0"], "US")], model.vocabulary_, "country")
    with pytest.raises(KeyError, match="not in vocabulary"):
        compose_region_embedding(model, index, "nope", "US")


def test_proportions_and_min_docs(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    model.sense_stats_[0] = [50.0, 0.0]
    model.sense_threshold = 0.05
    docs = [doc(i, ["w0", "w1"], "US") for i in range(10)]
    index = build_region_index(docs, model.vocabulary_, "country")
    assert sense_proportions(model, index, "w0", "US", min_docs=15) is None
    props = sense_proportions(model, index, "w0", "US", min_docs=10)
    assert props.tolist() == [1.0, 0.0]


def test_identical_profiles_score_zero(small_corpus, small_adagram):
    docs, _ = small_corpus
    index = build_region_index(docs, small_adagram.vocabulary_, "country")
    merged = index.merged({"UK": "US"})
    assert dialectgram_score(small_adagram, merged, "shift00", "US", "US") == 0.0


def test_pure_regions_score_sense_distance(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4], dim=2, senses=2)
    model.sense_stats_[0] = [5.0, 5.0]
    model.sense_in_[0] = [[4.0, 0.0], [-4.0, 0.0]]
    model.node_out_[:] = 0
    # make context word w1 decisive: positive node weights favour sense 0, w2 favours sense 1
    nodes1, signs1 = model.tree_.gather([1])
    nodes2, signs2 = model.tree_.gather([2])
    model.node_out_[nodes1[0]] = [signs1[0] * 5.0, 0.0]
    if nodes2[0] != nodes1[0]:
        model.node_out_[nodes2[0]] = [-signs2[0] * 5.0, 0.0]
    if np.argmax(model.disambiguate("w0", ["w1"])) == np.argmax(model.disambiguate("w0", ["w2"])):
        pytest.skip("toy tree puts both context words behind one node")
    docs = [doc(0, ["w0", "w1"], "US"), doc(1, ["w0", "w2"], "UK")]
    index = build_region_index(docs, model.vocabulary_, "country")
    score = dialectgram_score(model, index, "w0", "US", "UK")
    assert score == pytest.approx(manhattan(model.sense_in_[0, 0], model.sense_in_[0, 1]))


def test_convex_hull_bound(small_corpus, small_adagram):
    docs, _ = small_corpus
    index = build_region_index(docs, small_adagram.vocabulary_, "country")
    for word in ("shift00", "same00", "ctx001"):
        active = small_adagram.active_senses(word)
        v = small_adagram.sense_in_[small_adagram.vocabulary_[word], active].astype(float)
        bound = max(manhattan(a, b) for a in v for b in v)
        assert dialectgram_score(small_adagram, index, word, "US", "UK") <= bound + 1e-9


def test_merged_counts_are_additive(small_spec, small_corpus, small_adagram):
    docs, _ = small_corpus
    rmap, parent = split_region_map(small_spec)
    stripped = [Document(d.id, tokens=d.tokens, lat=d.lat, lon=d.lon) for d in docs]
    fine = build_region_index(stripped, small_adagram.vocabulary_, "subregion", rmap)
    coarse = build_region_index(docs, small_adagram.vocabulary_, "country")
    merged = fine.merged(parent, "country")
    for word in ("shift00", "same02"):
        for region in ("US", "UK"):
            kids = [sense_usage(small_adagram, fine, word, r) for r in parent if parent[r] == region]
            total = kids[0] + kids[1]
            direct = sense_usage(small_adagram, coarse, word, region)
            via = sense_usage(small_adagram, merged, word, region)
            assert np.array_equal(total.counts, direct.counts)
            assert np.array_equal(via.counts, direct.counts)
            assert total.n == direct.n


def test_soft_counts_sum_to_n(small_corpus, small_adagram):
    docs, _ = small_corpus
    index = build_region_index(docs, small_adagram.vocabulary_, "country")
    usage = sense_usage(small_adagram, index, "shift01", "US", soft=True)
    assert usage.counts.sum() == pytest.approx(usage.n, abs=1e-9)
    props = sense_proportions(small_adagram, index, "shift01", "US", soft=True)
    assert props.sum() == pytest.approx(1.0, abs=1e-9)


def test_choropleth_records_and_files(small_spec, small_corpus, small_adagram, tmp_path):
    docs, _ = small_corpus
    rmap = small_spec.region_map()
    index = build_region_index(docs, small_adagram.vocabulary_, "country", rmap)
    records = export_choropleth(small_adagram, index, "shift00", sense=0, min_docs=15)
    assert [r.region_id for r in records] == ["US", "UK"]
    for rec in records:
        props = sense_proportions(small_adagram, index, "shift00", rec.region_id)
        assert rec.proportion == pytest.approx(props[0])
    sparse = export_choropleth(small_adagram, index, "shift00", min_docs=10**6)
    assert all(r.proportion is None for r in sparse)
    write_choropleth_csv(records + sparse[:1], tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert tuple(rows[0]) == CHOROPLETH_HEADER == ("region_id", "sense", "proportion", "n_docs")
    assert rows[1][1] == "1" and rows[-1][2] == ""
    assert float(rows[1][2]) == records[0].proportion
    write_choropleth_geojson(records, rmap, tmp_path / "c.geojson")
    geo = json.load(open(tmp_path / "c.geojson"))
    assert geo["type"] == "FeatureCollection"
    assert [f["properties"]["region_id"] for f in geo["features"]] == ["US", "UK"]
    assert geo["features"][0]["properties"]["proportion"] == records[0].proportion


def test_zero_occurrence_region_record(make_toy_adagram):
    model = make_toy_adagram([10, 8, 6, 4])
    rmap = RegionMap.from_dict({"resolution": "country", "regions": [
        {"id": "US", "bbox": [-125, 25, -66, 49]}, {"id": "UK", "bbox": [-8, 50, 2, 59]}]})
    docs = [doc(0, ["w0", "w1"], "US")]
    index = build_region_index(docs, model.vocabulary_, "country", rmap)
    records = export_choropleth(model, index, "w0", 0, min_docs=1)
    uk = [r for r in records if r.region_id == "UK"][0]
    assert (uk.proportion, uk.n_docs) == (None, 0)


def test_estimator_reuses_model_across_resolutions(small_spec, small_corpus, small_adagram, tmp_path):
    docs, _ = small_corpus
    small_adagram.save(tmp_path / "before.bin")
    dg = DialectGram(adagram=small_adagram).fit(docs)
    assert dg.model_ is small_adagram
    country = dg.transform(["shift00", "nope"], pair=("US", "UK"))
    assert np.isnan(country[1, 0]) and country[0, 0] > 0
    rmap, _ = split_region_map(small_spec)
    dg.reindex(docs, "subregion", rmap)
    assert dg.resolution == "country"
    assert dg.index_.resolution == "subregion"
    assert np.isfinite(dg.word_score("shift00", "US-W", "UK-E"))
    small_adagram.save(tmp_path / "after.bin")
    assert (tmp_path / "before.bin").read_bytes() == (tmp_path / "after.bin").read_bytes()


def test_estimator_trains_unfitted_adagram(small_corpus):
    from dialect_atlas.adagram import AdaGram
    docs, _ = small_corpus
    template = AdaGram(dim=4, window=2, min_freq=1)
    dg = DialectGram(adagram=template, pair=("US", "UK")).fit(docs[:50])
    assert not hasattr(template, "sense_in_")
    assert dg.transform(["shift00"]).shape == (1, 1)
    assert dg.get_params()["min_docs"] == 15
