"""Helpers shared by the embedding models: distances, schedules, input checks."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .corpus import Document, Vocabulary, build_vocabulary


def manhattan(a, b) -> float:
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).sum())


def euclidean(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)))


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b):
        return 0.0
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0 if na == nb else 1.0
    # clamp: rounding can push identical vectors slightly below zero
    return max(0.0, float(1.0 - a @ b / (na * nb)))


METRICS = {"manhattan": manhattan, "euclidean": euclidean, "cosine": cosine_distance,
           "cosine-distance": cosine_distance}


def distance(a, b, metric: str = "manhattan") -> float:
    try:
        fn = METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}") from None
    return fn(a, b)


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    return metric


def linear_lr(lr: float, min_lr: float, done: np.ndarray | float, total: float) -> np.ndarray:
    """Linearly decayed learning rate after ``done`` of ``total`` tokens."""
    frac = np.asarray(done, dtype=np.float64) / max(float(total), 1.0)
    return np.maximum(lr * (1.0 - frac), min_lr)


def token_lists(documents: Iterable) -> list[Sequence[str]]:
    """Token sequences from Documents or from plain token lists."""
    return [doc.tokens if isinstance(doc, Document) else doc for doc in documents]


def resolve_vocabulary(vocabulary: Vocabulary | None, tokens: list[Sequence[str]], min_freq: int) -> Vocabulary:
    if vocabulary is not None:
        return vocabulary
    return build_vocabulary(tokens, min_freq=min_freq)


def context_window(ids: np.ndarray, pos: int, window: int) -> np.ndarray:
    """Ids within ``window`` positions of ``pos``, excluding ``pos`` itself."""
    lo, hi = max(0, pos - window), min(len(ids), pos + window + 1)
    return np.concatenate((ids[lo:pos], ids[pos + 1:hi]))


def pair_counts(n: int, reduced: np.ndarray) -> np.ndarray:
    """Number of context positions of each centre given per-centre window sizes."""
    pos = np.arange(n)
    return np.minimum(pos, reduced) + np.minimum(n - 1 - pos, reduced)


def check_positive(name: str, value, allow_zero: bool = False):
    if value is None or (value < 0 if allow_zero else value <= 0):
        raise ValueError(f"{name} must be {'>= 0' if allow_zero else '> 0'}, got {value!r}")
    return value
