"""Threshold classification of word scores against a labeled shift lexicon."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

log = logging.getLogger(__name__)

SPLITS = ("train", "test")
REPORT_COLUMNS = ("Model", "Acc", "Prec", "Recall", "F1")


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    label: int
    split: str | None = None


@dataclass
class LabeledLexicon:
    """Words labeled shifted (1) or same (0), optionally with a pinned split."""

    entries: list[LexiconEntry]
    seed: int | None = None

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.label not in (0, 1):
                raise ValueError(f"label for {e.word!r} must be 0 or 1, got {e.label!r}")
            if e.split is not None and e.split not in SPLITS:
                raise ValueError(f"split for {e.word!r} must be train or test, got {e.split!r}")
            if e.word in seen:
                raise ValueError(f"duplicate lexicon word {e.word!r}")
            seen.add(e.word)

    def __len__(self):
        return len(self.entries)

    @property
    def words(self) -> list[str]:
        return [e.word for e in self.entries]

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([e.label for e in self.entries], dtype=np.int64)

    @classmethod
    def from_labels(cls, labels: Mapping[str, int]) -> "LabeledLexicon":
        return cls([LexiconEntry(w, int(y)) for w, y in labels.items()])


def read_lexicon(path: str | Path) -> LabeledLexicon:
    """Read ``word<TAB>label[<TAB>split]`` lines; blank lines and ``#`` comments are skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            try:
                label = int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1") from None
            entries.append(LexiconEntry(parts[0], label, parts[2] if len(parts) == 3 else None))
    return LabeledLexicon(entries)


def write_lexicon(lexicon: LabeledLexicon, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in lexicon.entries:
            fields = [e.word, str(e.label)] + ([e.split] if e.split else [])
            fh.write("\t".join(fields) + "\n")


def _quotas(class_sizes: dict[int, int], n_train: int, ratio: float) -> dict[int, int]:
    # largest remainder; ties go to the smaller label
    exact = {c: ratio * n for c, n in class_sizes.items()}
    quota = {c: math.floor(x) for c, x in exact.items()}
    order = sorted(class_sizes, key=lambda c: (-(exact[c] - quota[c]), c))
    for c in order[: n_train - sum(quota.values())]:
        quota[c] += 1
    return quota


def split_lexicon(lexicon: LabeledLexicon, ratio: float = 0.75,
                  seed: int = 0) -> tuple[LabeledLexicon, LabeledLexicon]:
    """Stratified shuffled split; ``floor(ratio * n)`` entries go to train.

    Entries with a pinned split keep it; only the rest are shuffled and divided.

    >>> lex = LabeledLexicon.from_labels({"a": 0, "b": 0, "c": 1, "d": 1})
    >>> [len(part) for part in split_lexicon(lex, seed=1)]
    [3, 1]
    """
    if len(lexicon) == 0:
        raise ValueError("cannot split an empty lexicon")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio!r}")
    pinned = {"train": [], "test": []}
    free: dict[int, list[LexiconEntry]] = {0: [], 1: []}
    for e in lexicon.entries:
        if e.split is not None:
            pinned[e.split].append(e)
        else:
            free[e.label].append(e)
    rng = np.random.default_rng(seed)
    sizes = {c: len(v) for c, v in free.items() if v}
    quota = _quotas(sizes, math.floor(ratio * sum(sizes.values())), ratio)
    train, test = list(pinned["train"]), list(pinned["test"])
    for c in sorted(sizes):
        members = [free[c][i] for i in rng.permutation(sizes[c])]
        train += members[: quota[c]]
        test += members[quota[c]:]
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    mark = lambda es, s: [LexiconEntry(e.word, e.label, s) for e in es]  # noqa: E731
    return (LabeledLexicon(mark(train, "train"), seed),
            LabeledLexicon(mark(test, "test"), seed))


def threshold_candidates(scores) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints between consecutive distinct scores plus one sentinel beyond each end.

    Returns ``(thresholds, margins)``; a midpoint's margin is the width of its
    gap, the sentinels get margin 0 so that real cut points win ties.
    """
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    thresholds = np.concatenate([[u[0] - 1.0], mids, [u[-1] + 1.0]])
    margins = np.concatenate([[0.0], np.diff(u), [0.0]])
    return thresholds, margins


def _training_accuracies(scores: np.ndarray, labels: np.ndarray, thresholds: np.ndarray):
    # sweep: predictions are score > t, so correct = positives above t + negatives at or below t
    order = np.argsort(scores, kind="stable")
    s, y = scores[order], labels[order]
    below = np.searchsorted(s, thresholds, side="right")
    neg_below = np.concatenate([[0], np.cumsum(y == 0)])[below]
    pos_above = int(y.sum()) - np.concatenate([[0], np.cumsum(y == 1)])[below]
    return (neg_below + pos_above) / len(y)


class ThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Predicts shifted (1) when a score exceeds a threshold fitted for training accuracy.

    Accuracy ties are broken toward the widest gap between neighbouring scores,
    then toward the lower threshold.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=False, dtype=np.float64)
        scores = X.reshape(len(X), -1)
        if scores.shape[1] != 1:
            raise ValueError("ThresholdClassifier takes exactly one score per sample")
        scores = scores[:, 0]
        y = np.asarray(y)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if len(np.unique(y)) < 2:
            raise ValueError("threshold fitting needs at least one example of each label")
        self.classes_ = np.array([0, 1])
        thresholds, margins = threshold_candidates(scores)
        acc = _training_accuracies(scores, y.astype(np.int64), thresholds)
        best = np.flatnonzero(acc == acc.max())
        pick = best[np.argmax(margins[best])]  # argmax keeps the first, i.e. lowest, on ties
        self.threshold_ = float(thresholds[pick])
        self.train_accuracy_ = float(acc[pick])
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "threshold_")
        X = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite="allow-nan")
        scores = X.reshape(len(X), -1)[:, 0]
        return (scores > self.threshold_).astype(np.int64)


def _aligned(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scores, Mapping):
        if not isinstance(labels, Mapping):
            raise TypeError("labels must be a mapping when scores are")
        words = list(labels)
        return (np.asarray([scores.get(w, np.nan) for w in words], dtype=np.float64),
                np.asarray([labels[w] for w in words], dtype=np.int64))
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(s) != len(y):
        raise ValueError(f"{len(s)} scores but {len(y)} labels")
    return s, y


def fit_threshold(scores, labels) -> ThresholdClassifier:
    """Fit on word->score and word->label mappings (or aligned arrays); NaN scores are skipped."""
    s, y = _aligned(scores, labels)
    keep = ~np.isnan(s)
    return ThresholdClassifier().fit(s[keep].reshape(-1, 1), y[keep])


@dataclass(frozen=True)
class MetricsReport:
    """Binary confusion counts with shifted as the positive class.

    ``n_missing`` test words had no score; they are already counted as errors
    in ``fp`` or ``fn``.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    n_missing: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n if self.n else 0.0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "n_missing": self.n_missing}


def confusion(predictions, labels, n_missing: int = 0) -> MetricsReport:
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    return MetricsReport(tp=int(((p == 1) & (y == 1)).sum()), fp=int(((p == 1) & (y == 0)).sum()),
                         tn=int(((p == 0) & (y == 0)).sum()), fn=int(((p == 0) & (y == 1)).sum()),
                         n_missing=n_missing)


def evaluate_classifier(classifier: ThresholdClassifier, scores, labels) -> MetricsReport:
    """Confusion counts on test scores; a missing (NaN) score is always a wrong prediction."""
    s, y = _aligned(scores, labels)
    missing = np.isnan(s)
    pred = np.zeros(len(s), dtype=np.int64)
    if (~missing).any():
        pred[~missing] = classifier.predict(s[~missing].reshape(-1, 1))
    pred[missing] = 1 - y[missing]
    return confusion(pred, y, int(missing.sum()))


@dataclass
class BenchmarkRow:
    model: str
    report: MetricsReport | None = None
    threshold: float | None = None
    error: str | None = None
    scores: dict[str, float] = field(default_factory=dict)


def score_words(model, documents, words: Sequence[str], pair) -> dict[str, float]:
    """Fit ``model`` on the corpus unless already fitted, then score ``words``."""
    try:
        check_is_fitted(model)
    except Exception:
        model.fit(documents)
    values = np.asarray(model.transform(list(words), pair=pair), dtype=np.float64).reshape(-1)
    return dict(zip(words, values.tolist()))


def run_benchmark(documents, lexicon: LabeledLexicon, models: Mapping[str, object], pair,
                  seed: int = 0, ratio: float = 0.75, split=None) -> list[BenchmarkRow]:
    """Score, fit and evaluate every model on one shared split; failures are recorded per row."""
    documents = list(documents)
    train, test = split if split is not None else split_lexicon(lexicon, ratio, seed)
    train_labels = dict(zip(train.words, train.labels.tolist()))
    test_labels = dict(zip(test.words, test.labels.tolist()))
    rows = []
    for name, model in models.items():
        try:
            scores = score_words(model, documents, lexicon.words, pair)
            clf = fit_threshold(scores, train_labels)
            report = evaluate_classifier(clf, scores, test_labels)
            rows.append(BenchmarkRow(name, report, clf.threshold_, scores=scores))
        except Exception as exc:  # keep going with the other models
            log.error("model %s failed: %s", name, exc)
            rows.append(BenchmarkRow(name, error=f"{type(exc).__name__}: {exc}"))
    return rows


def format_report(rows: Sequence[BenchmarkRow | tuple[str, MetricsReport]]) -> str:
    """Tab-separated table with columns Model, Acc, Prec, Recall, F1 at four decimals."""
    lines = ["\t".join(REPORT_COLUMNS)]
    for row in rows:
        name, report = (row.model, row.report) if isinstance(row, BenchmarkRow) else row
        if report is None:
            continue
        lines.append("\t".join([name] + [f"{v:.4f}" for v in
                                         (report.accuracy, report.precision, report.recall, report.f1)]))
    return "\n".join(lines) + "\n"


def write_report(rows, path: str | Path) -> None:
    Path(path).write_text(format_report(rows), encoding="utf-8")


def read_report(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))
