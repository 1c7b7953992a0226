"""Post-hoc region-specific embeddings composed from a region-agnostic AdaGram.

A trained :class:`~dialect_atlas.adagram.AdaGram` is never modified here. For a
chosen resolution, word occurrences are grouped by region; each occurrence is
disambiguated in its context window, and the region embedding is the
sense-count-weighted average of the word's sense vectors.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._common import check_metric, context_window, distance
from .adagram import AdaGram
from .corpus import UNKNOWN, Document, RegionMap, Vocabulary, assign_region

MIN_DOCS = 15


@dataclass
class RegionIndex:
    """Occurrences of every vocabulary word, grouped by region, at one resolution."""

    resolution: str
    regions: list[str]
    docs: list[np.ndarray]
    doc_ids: list[str]
    doc_regions: list[str]
    occurrences: dict[str, dict[int, list[tuple[int, int]]]] = field(default_factory=dict)

    def positions(self, region: str, word_id: int) -> list[tuple[int, int]]:
        if region not in self.occurrences:
            raise KeyError(f"region {region!r} not in {self.resolution!r} index")
        return self.occurrences[region].get(word_id, [])

    def merged(self, mapping: dict[str, str], resolution: str | None = None) -> "RegionIndex":
        """Coarser index whose regions are ``mapping[child]`` unions of this one's."""
        parents = list(dict.fromkeys(mapping.get(r, r) for r in self.regions))
        occ: dict[str, dict[int, list]] = {p: defaultdict(list) for p in parents}
        for region, words in self.occurrences.items():
            target = occ.setdefault(mapping.get(region, region), defaultdict(list))
            for w, pos in words.items():
                target[w].extend(pos)
        for words in occ.values():
            for pos in words.values():
                pos.sort()
        return RegionIndex(resolution or self.resolution, parents, self.docs, self.doc_ids,
                           [mapping.get(r, r) for r in self.doc_regions],
                           {r: dict(w) for r, w in occ.items()})


def build_region_index(documents: Iterable[Document], vocabulary: Vocabulary, resolution: str,
                       region_map: RegionMap | None = None) -> RegionIndex:
    """Inverted index of word positions per region.

    Positions refer to the vocabulary-encoded token sequence (OOV tokens
    removed), matching what the model saw in training. Documents that resolve
    to no region land in ``"unknown"``.
    """
    regions = list(region_map.region_ids) if region_map is not None and \
        region_map.resolution == resolution else []
    occ: dict[str, dict[int, list[tuple[int, int]]]] = {r: defaultdict(list) for r in regions}
    docs, doc_ids, doc_regions = [], [], []
    for doc in documents:
        region = assign_region(doc, resolution, region_map)
        ids = vocabulary.encode(doc.tokens)
        d = len(docs)
        docs.append(ids)
        doc_ids.append(doc.id)
        doc_regions.append(region)
        if region not in occ:
            occ[region] = defaultdict(list)
            if region != UNKNOWN:
                regions.append(region)
        bucket = occ[region]
        for pos, w in enumerate(ids.tolist()):
            bucket[w].append((d, pos))
    if region_map is None or region_map.resolution != resolution:
        regions.sort()
    if UNKNOWN in occ:
        regions.append(UNKNOWN)
    return RegionIndex(resolution, regions, docs, doc_ids, doc_regions,
                       {r: dict(w) for r, w in occ.items()})


@dataclass
class SenseUsage:
    """Sense counts and priors of one word in one region."""

    word: str
    region: str
    counts: np.ndarray
    priors: np.ndarray
    n: int
    n_docs: int

    @property
    def empty(self) -> bool:
        return self.n == 0

    def weights(self) -> np.ndarray:
        if self.n == 0:
            return self.priors
        return self.counts / self.counts.sum()

    def __add__(self, other: "SenseUsage") -> "SenseUsage":
        return SenseUsage(self.word, f"{self.region}+{other.region}", self.counts + other.counts,
                          self.priors, self.n + other.n, self.n_docs + other.n_docs)


def sense_usage(model: AdaGram, index: RegionIndex, word: str, region: str,
                window: int = 10, soft: bool = False) -> SenseUsage:
    """Disambiguate every occurrence of ``word`` in ``region``.

    Hard mode counts the argmax sense (lowest id on ties); soft mode adds the
    full posterior.
    """
    w = model.vocabulary_[word]
    positions = index.positions(region, w)
    counts = np.zeros(model.max_senses)
    for d, pos in positions:
        post = model.disambiguate(w, context_window(index.docs[d], pos, window))
        if soft:
            counts += post
        else:
            counts[int(np.argmax(post))] += 1
    n_docs = len({d for d, _ in positions})
    return SenseUsage(word, region, counts, model.sense_prior(w), len(positions), n_docs)


def compose_region_embedding(model: AdaGram, index: RegionIndex, word: str, region: str,
                             window: int = 10, soft: bool = False) -> tuple[np.ndarray, SenseUsage]:
    """Region embedding of ``word``: sense vectors weighted by regional sense counts.

    With no occurrences in the region the sense priors are used as weights and
    the returned usage has ``empty`` set.
    """
    usage = sense_usage(model, index, word, region, window, soft)
    return usage_embedding(model, usage), usage


def usage_embedding(model: AdaGram, usage: SenseUsage) -> np.ndarray:
    vectors = model.sense_in_[model.vocabulary_[usage.word]].astype(np.float64)
    return usage.weights() @ vectors


def sense_proportions(model: AdaGram, index: RegionIndex, word: str, region: str,
                      min_docs: int = MIN_DOCS, window: int = 10, soft: bool = False):
    """Per-sense share of the word's occurrences in ``region``.

    Returns ``None`` when fewer than ``min_docs`` documents in the region use the word.
    """
    usage = sense_usage(model, index, word, region, window, soft)
    if usage.n_docs < min_docs or usage.n == 0:
        return None
    return usage.counts / usage.counts.sum()


def dialectgram_score(model: AdaGram, index: RegionIndex, word: str, r1: str, r2: str,
                      metric: str = "manhattan", window: int = 10, soft: bool = False) -> float:
    e1, _ = compose_region_embedding(model, index, word, r1, window, soft)
    e2, _ = compose_region_embedding(model, index, word, r2, window, soft)
    return distance(e1, e2, metric)


@dataclass
class ChoroplethRecord:
    region_id: str
    sense: int
    proportion: float | None
    n_docs: int


def export_choropleth(model: AdaGram, index: RegionIndex, word: str, sense: int = 0,
                      min_docs: int = MIN_DOCS, window: int = 10, soft: bool = False,
                      include_unknown: bool = False) -> list[ChoroplethRecord]:
    """One record per region of the index; ``proportion`` is None for sparse regions.

    ``sense`` is zero-based here; file writers emit it one-based.
    """
    records = []
    for region in index.regions:
        if region == UNKNOWN and not include_unknown:
            continue
        usage = sense_usage(model, index, word, region, window, soft)
        prop = None
        if usage.n > 0 and usage.n_docs >= min_docs:
            prop = float(usage.counts[sense] / usage.counts.sum())
        records.append(ChoroplethRecord(region, sense, prop, usage.n_docs))
    return records


CHOROPLETH_HEADER = ("region_id", "sense", "proportion", "n_docs")


def write_choropleth_csv(records: Sequence[ChoroplethRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CHOROPLETH_HEADER)
        for r in records:
            writer.writerow([r.region_id, r.sense + 1,
                             "" if r.proportion is None else repr(r.proportion), r.n_docs])


def write_choropleth_geojson(records: Sequence[ChoroplethRecord], region_map: RegionMap,
                             path: str | Path) -> None:
    geoms = dict(region_map.regions)
    features = []
    for r in records:
        if r.region_id not in geoms:
            continue
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon",
                         "coordinates": [[list(c) for c in geoms[r.region_id].exterior.coords]]},
            "properties": {"region_id": r.region_id, "sense": r.sense + 1,
                           "proportion": r.proportion, "n_docs": r.n_docs},
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1)


class DialectGram(TransformerMixin, BaseEstimator):
    """Region-change scorer on top of a region-agnostic AdaGram model.

    ``fit`` trains ``adagram`` on the documents' tokens (skipped when the given
    AdaGram is already fitted) and indexes the documents at ``resolution``.
    :meth:`reindex` switches resolution without touching the model.
    """

    def __init__(self, adagram=None, resolution="country", region_map=None, pair=None,
                 window=10, metric="manhattan", min_docs=MIN_DOCS, soft=False):
        self.adagram = adagram
        self.resolution = resolution
        self.region_map = region_map
        self.pair = pair
        self.window = window
        self.metric = metric
        self.min_docs = min_docs
        self.soft = soft

    def fit(self, documents: Sequence[Document], y=None):
        check_metric(self.metric)
        documents = list(documents)
        base = self.adagram if self.adagram is not None else AdaGram()
        if hasattr(base, "sense_in_"):
            self.model_ = base
        else:
            self.model_ = clone(base).fit(documents)
        return self.reindex(documents)

    def reindex(self, documents: Iterable[Document], resolution: str | None = None,
                region_map: RegionMap | None = None):
        check_is_fitted(self, "model_")
        if resolution is None:
            resolution, region_map = self.resolution, self.region_map
        self.index_ = build_region_index(documents, self.model_.vocabulary_, resolution, region_map)
        return self

    def _pair(self, pair=None):
        pair = pair or self.pair or tuple(r for r in self.index_.regions if r != UNKNOWN)[:2]
        if len(pair) != 2:
            raise ValueError(f"need exactly two regions to compare, got {pair!r}")
        return tuple(pair)

    def usage(self, word: str, region: str) -> SenseUsage:
        check_is_fitted(self, "index_")
        return sense_usage(self.model_, self.index_, word, region, self.window, self.soft)

    def region_embedding(self, word: str, region: str) -> np.ndarray:
        return usage_embedding(self.model_, self.usage(word, region))

    def word_score(self, word: str, r1: str, r2: str, metric: str | None = None) -> float:
        return distance(self.region_embedding(word, r1), self.region_embedding(word, r2),
                        metric or self.metric)

    def transform(self, words: Sequence[str], pair=None) -> np.ndarray:
        check_is_fitted(self, "index_")
        r1, r2 = self._pair(pair)
        vocab = self.model_.vocabulary_
        return np.asarray([[self.word_score(w, r1, r2) if w in vocab else np.nan] for w in words],
                          dtype=np.float64).reshape(-1, 1)

    def proportions(self, word: str, region: str):
        check_is_fitted(self, "index_")
        return sense_proportions(self.model_, self.index_, word, region, self.min_docs,
                                 self.window, self.soft)

    def choropleth(self, word: str, sense: int = 0) -> list[ChoroplethRecord]:
        check_is_fitted(self, "index_")
        return export_choropleth(self.model_, self.index_, word, sense, self.min_docs,
                                 self.window, self.soft)
