"""Frequency and part-of-speech baselines for regional change scoring."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import jensenshannon
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import UNKNOWN, Document, assign_region


@dataclass
class RegionUsage:
    """Token and POS-tag counts of one word per region, with region token totals."""

    word: str
    counts: dict[str, int]
    totals: dict[str, int]
    pos_counts: dict[str, Counter] = field(default_factory=dict)


def frequency_score(word: str, usage: RegionUsage, r1: str, r2: str) -> float:
    """Absolute log ratio of add-one smoothed relative frequencies."""
    if usage.word != word:
        raise ValueError(f"usage table is for {usage.word!r}, not {word!r}")
    n1, n2 = usage.totals.get(r1, 0), usage.totals.get(r2, 0)
    if n1 <= 0 or n2 <= 0:
        raise ValueError(f"regions {r1!r} and {r2!r} need nonzero token counts")
    c1, c2 = usage.counts.get(r1, 0), usage.counts.get(r2, 0)
    return abs(math.log((c1 + 1) / n1) - math.log((c2 + 1) / n2))


def syntactic_score(word: str, usage: RegionUsage, r1: str, r2: str) -> float:
    """Jensen-Shannon divergence (base 2) between the word's regional POS distributions."""
    if usage.word != word:
        raise ValueError(f"usage table is for {usage.word!r}, not {word!r}")
    p1, p2 = usage.pos_counts.get(r1), usage.pos_counts.get(r2)
    if not p1 or not p2 or sum(p1.values()) == 0 or sum(p2.values()) == 0:
        raise ValueError("syntactic model requires tagged corpus")
    tags = sorted(set(p1) | set(p2))
    a = np.asarray([p1.get(t, 0) for t in tags], dtype=np.float64)
    b = np.asarray([p2.get(t, 0) for t in tags], dtype=np.float64)
    # scipy returns the distance, i.e. the square root of the divergence
    return float(np.clip(jensenshannon(a, b, base=2) ** 2, 0.0, 1.0))


class _RegionCounter(TransformerMixin, BaseEstimator):
    _score = staticmethod(frequency_score)

    def __init__(self, resolution="country", region_map=None, pair=None, min_freq=1):
        self.resolution = resolution
        self.region_map = region_map
        self.pair = pair
        self.min_freq = min_freq

    def fit(self, documents: Sequence[Document], y=None):
        counts: dict[str, Counter] = defaultdict(Counter)
        pos: dict[str, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
        totals: Counter = Counter()
        for doc in documents:
            region = assign_region(doc, self.resolution, self.region_map)
            counts[region].update(doc.tokens)
            totals[region] += len(doc.tokens)
            if doc.pos_tags is not None:
                for tok, tag in zip(doc.tokens, doc.pos_tags):
                    pos[region][tok][tag] += 1
        overall: Counter = Counter()
        for c in counts.values():
            overall.update(c)
        self.vocabulary_ = {w for w, c in overall.items() if c >= self.min_freq}
        self.counts_ = dict(counts)
        self.pos_counts_ = {r: dict(v) for r, v in pos.items()}
        self.totals_ = dict(totals)
        self.regions_ = sorted(r for r in totals if r != UNKNOWN)
        return self

    def usage(self, word: str) -> RegionUsage:
        check_is_fitted(self, "counts_")
        if word not in self.vocabulary_:
            raise KeyError(f"word {word!r} not in vocabulary")
        return RegionUsage(
            word=word,
            counts={r: c.get(word, 0) for r, c in self.counts_.items()},
            totals=dict(self.totals_),
            pos_counts={r: p[word] for r, p in self.pos_counts_.items() if word in p},
        )

    def word_score(self, word: str, r1: str, r2: str) -> float:
        return type(self)._score(word, self.usage(word), r1, r2)

    def _pair(self, pair=None):
        pair = pair or self.pair or tuple(self.regions_[:2])
        if len(pair) != 2:
            raise ValueError(f"need exactly two regions to compare, got {pair!r}")
        return tuple(pair)

    def transform(self, words: Sequence[str], pair=None) -> np.ndarray:
        """Scores for ``words`` as a column; NaN where a word cannot be scored."""
        check_is_fitted(self, "counts_")
        r1, r2 = self._pair(pair)
        out = np.full((len(words), 1), np.nan)
        for i, w in enumerate(words):
            try:
                out[i, 0] = self.word_score(w, r1, r2)
            except (KeyError, ValueError):
                pass
        return out


class FrequencyScorer(_RegionCounter):
    """Scores a word by how differently often it is used in two regions."""

    _score = staticmethod(frequency_score)


class SyntacticScorer(_RegionCounter):
    """Scores a word by how differently it is POS-tagged in two regions."""

    _score = staticmethod(syntactic_score)
