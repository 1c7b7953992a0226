"""Region-conditioned skip-gram (GEODIST).

Each word has a global vector plus one differential vector per region; the
region-specific embedding is their sum. Training minimises the negative-sampling
approximation of ``-log p(context | centre, region)`` by plain SGD.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from . import _binio
from ._common import check_metric, check_positive, distance, linear_lr, pair_counts
from .corpus import UNKNOWN, Document, assign_region, build_vocabulary

logger = logging.getLogger(__name__)

MAGIC = b"GDST"
FORMAT_VERSION = 1
NOISE_POWER = 0.75
PROGRESS_EVERY = 1_000_000


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def sgns_loss_and_grad(phi, out, context, negatives):
    """Negative-sampling loss of one (centre, context) pair and its gradients.

    ``phi`` is the centre's region embedding, ``out`` the full output matrix.
    Negatives equal to the context word are ignored. Returns
    ``(loss, grad_phi, grad_out)`` with ``grad_out`` shaped like ``out``.
    """
    negatives = [int(n) for n in negatives if int(n) != int(context)]
    targets = np.asarray([int(context)] + negatives, dtype=np.int64)
    labels = np.zeros(len(targets))
    labels[0] = 1.0
    scores = out[targets] @ phi
    signs = 2.0 * labels - 1.0
    loss = -float(log_sigmoid(signs * scores).sum())
    coef = 1.0 / (1.0 + np.exp(-scores)) - labels
    grad_phi = coef @ out[targets]
    grad_out = np.zeros_like(out, dtype=np.float64)
    np.add.at(grad_out, targets, np.outer(coef, phi))
    return loss, grad_phi, grad_out


@numba.njit(cache=True, nogil=True)
def _log_sig(x):
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@numba.njit(cache=True, nogil=True)
def _train_document(main, region, out, ids, reduced, negs, nneg, lrs, update_main, update_out):
    n = ids.shape[0]
    d = main.shape[1]
    phi = np.empty(d)
    err = np.empty(d)
    ptr = 0
    loss = 0.0
    pairs = 0
    targets = np.empty(nneg + 1, dtype=np.int64)
    coefs = np.empty(nneg + 1)
    for i in range(n):
        c = ids[i]
        b = reduced[i]
        lr = lrs[i]
        for j in range(max(0, i - b), min(n, i + b + 1)):
            if j == i:
                continue
            ctx = ids[j]
            for t in range(d):
                phi[t] = main[c, t] + region[c, t]
                err[t] = 0.0
            m = 0
            targets[m] = ctx
            m += 1
            for q in range(nneg):
                neg = negs[ptr + q]
                if neg != ctx:
                    targets[m] = neg
                    m += 1
            ptr += nneg
            for q in range(m):
                s = 0.0
                for t in range(d):
                    s += out[targets[q], t] * phi[t]
                loss -= _log_sig(s if q == 0 else -s)
                coefs[q] = 1.0 / (1.0 + np.exp(-s)) - (1.0 if q == 0 else 0.0)
            for q in range(m):
                g = coefs[q]
                for t in range(d):
                    err[t] += g * out[targets[q], t]
            if update_out:
                for q in range(m):
                    g = coefs[q] * lr
                    for t in range(d):
                        out[targets[q], t] -= g * phi[t]
            for t in range(d):
                if update_main:
                    main[c, t] -= lr * err[t]
                region[c, t] -= lr * err[t]
            pairs += 1
    return loss, pairs


def noise_distribution(frequency: np.ndarray, power: float = NOISE_POWER) -> np.ndarray:
    weights = np.asarray(frequency, dtype=np.float64) ** power
    return weights / weights.sum()


@dataclass
class BootstrapResult:
    mean: float
    std: float
    interval: tuple[float, float]
    scores: np.ndarray


class GeodistModel(TransformerMixin, BaseEstimator):
    """Skip-gram embeddings with global plus per-region differential vectors.

    Parameters
    ----------
    resolution : str
        Resolution whose region labels condition training.
    region_map : RegionMap, optional
        Fallback point-in-region lookup for documents without a label.
    regions : sequence of str, optional
        Regions to model. Defaults to every region seen except ``"unknown"``.
    pair : (str, str), optional
        Region pair scored by :meth:`transform`; defaults to the first two regions.
    dim, window, negatives, epochs, lr, min_lr, min_freq, seed, workers
        Usual skip-gram settings. ``workers > 1`` trains lock-free across threads
        and is not reproducible; ``workers=1`` is bitwise deterministic.
    """

    def __init__(self, resolution="country", region_map=None, regions=None, pair=None,
                 dim=100, window=10, negatives=5, epochs=1, lr=0.025, min_lr=0.0001,
                 min_freq=20, metric="manhattan", seed=0, workers=1, vocabulary=None):
        self.resolution = resolution
        self.region_map = region_map
        self.regions = regions
        self.pair = pair
        self.dim = dim
        self.window = window
        self.negatives = negatives
        self.epochs = epochs
        self.lr = lr
        self.min_lr = min_lr
        self.min_freq = min_freq
        self.metric = metric
        self.seed = seed
        self.workers = workers
        self.vocabulary = vocabulary

    def _validate_params(self):
        for name in ("dim", "window", "negatives", "lr", "workers"):
            check_positive(name, getattr(self, name))
        check_positive("epochs", self.epochs, allow_zero=True)
        check_metric(self.metric)

    def _label_documents(self, documents: Iterable[Document]):
        labelled = []
        for doc in documents:
            labelled.append((doc, assign_region(doc, self.resolution, self.region_map)))
        return labelled

    def fit(self, documents: Sequence[Document], y=None):
        self._validate_params()
        labelled = self._label_documents(documents)
        if self.regions is not None:
            regions = list(self.regions)
        else:
            regions = sorted({r for _, r in labelled if r != UNKNOWN})
        if not regions:
            raise ValueError(f"no documents resolve to a region at resolution {self.resolution!r}")
        vocab = self.vocabulary if self.vocabulary is not None else build_vocabulary(
            [d for d, _ in labelled], self.min_freq)

        self.vocabulary_ = vocab
        self.regions_ = regions
        rng = np.random.default_rng(self.seed)
        V, d = len(vocab), self.dim
        self.delta_main_ = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(np.float32)
        self.delta_region_ = np.zeros((len(regions), V, d), dtype=np.float32)
        self.context_out_ = np.zeros((V, d), dtype=np.float32)

        encoded, self.n_skipped_ = self._encode(labelled)
        if self.n_skipped_:
            logger.warning("skipped %d documents outside regions %s", self.n_skipped_, regions)
        self.loss_history_ = self._run_epochs(encoded, rng, update_main=True, update_out=True)
        return self

    def _encode(self, labelled):
        index = {r: i for i, r in enumerate(self.regions_)}
        encoded, skipped = [], 0
        for doc, region in labelled:
            if region not in index:
                skipped += 1
                continue
            encoded.append((self.vocabulary_.encode(doc.tokens), index[region]))
        return encoded, skipped

    def _run_epochs(self, encoded, rng, update_main, update_out):
        noise_cum = np.cumsum(noise_distribution(self.vocabulary_.frequency))
        total = float(self.epochs * sum(len(ids) for ids, _ in encoded))
        history: list[float] = []
        if self.workers == 1:
            done = 0
            for _ in range(self.epochs):
                done = self._train_shard(encoded, rng, noise_cum, done, total, 1,
                                         update_main, update_out, history)
            return np.asarray(history)
        seeds = np.random.SeedSequence(self.seed).spawn(self.workers)
        rngs = [np.random.default_rng(s) for s in seeds]
        shards = [encoded[w::self.workers] for w in range(self.workers)]
        histories: list[list[float]] = [[] for _ in range(self.workers)]

        def work(w):
            done = 0
            for _ in range(self.epochs):
                done = self._train_shard(shards[w], rngs[w], noise_cum, done, total,
                                         self.workers, update_main, update_out, histories[w])

        with ThreadPoolExecutor(self.workers) as pool:
            list(pool.map(work, range(self.workers)))
        return np.asarray([h for hist in histories for h in hist])

    def _train_shard(self, encoded, rng, noise_cum, done, total, scale, update_main, update_out, history):
        next_report = PROGRESS_EVERY
        for ids, r in encoded:
            n = len(ids)
            if n < 2:
                done += n
                continue
            reduced = rng.integers(1, self.window + 1, size=n).astype(np.int64)
            n_pairs = int(pair_counts(n, reduced).sum())
            draws = rng.random(n_pairs * self.negatives) * noise_cum[-1]
            negs = np.minimum(np.searchsorted(noise_cum, draws, side="right"), len(noise_cum) - 1)
            lrs = linear_lr(self.lr, self.min_lr, (done + np.arange(n)) * scale, total)
            loss, pairs = _train_document(self.delta_main_, self.delta_region_[r], self.context_out_,
                                          ids.astype(np.int64), reduced, negs.astype(np.int64), self.negatives, lrs,
                                          update_main, update_out)
            if pairs:
                history.append(loss / pairs)
            done += n
            if done * scale >= next_report:
                logger.info("geodist: %d tokens, lr %.6f, loss %.4f", done * scale, lrs[-1],
                            history[-1] if history else float("nan"))
                next_report += PROGRESS_EVERY
        return done

    def _region_index(self, region: str) -> int:
        try:
            return self.regions_.index(region)
        except ValueError:
            raise KeyError(f"unknown region {region!r}; model regions are {self.regions_}") from None

    def region_embedding(self, word: str, region: str) -> np.ndarray:
        check_is_fitted(self, "delta_main_")
        w = self.vocabulary_[word]
        r = self._region_index(region)
        return self.delta_main_[w] + self.delta_region_[r, w]

    def word_score(self, word: str, r1: str, r2: str, metric: str | None = None) -> float:
        return distance(self.region_embedding(word, r1), self.region_embedding(word, r2),
                        metric or self.metric)

    def _pair(self, pair=None):
        pair = pair or self.pair or tuple(self.regions_[:2])
        if len(pair) != 2:
            raise ValueError(f"need exactly two regions to compare, got {pair!r}")
        return tuple(pair)

    def transform(self, words: Sequence[str], pair=None) -> np.ndarray:
        """Change score of each word between the pair's regions; NaN when OOV."""
        check_is_fitted(self, "delta_main_")
        r1, r2 = self._pair(pair)
        return np.asarray([[self.word_score(w, r1, r2) if w in self.vocabulary_ else np.nan]
                           for w in words], dtype=np.float64).reshape(-1, 1)

    def refit_regions(self, documents: Sequence[Document]):
        """Copy of this model with region differentials re-estimated on ``documents``.

        Global and output vectors stay frozen; differentials restart from zero.
        """
        check_is_fitted(self, "delta_main_")
        other = clone(self)
        other.vocabulary_, other.regions_ = self.vocabulary_, list(self.regions_)
        other.delta_main_ = self.delta_main_.copy()
        other.context_out_ = self.context_out_.copy()
        other.delta_region_ = np.zeros_like(self.delta_region_)
        encoded, other.n_skipped_ = other._encode(other._label_documents(documents))
        rng = np.random.default_rng(self.seed)
        other.loss_history_ = other._run_epochs(encoded, rng, update_main=False, update_out=False)
        return other

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "delta_main_")
        V, d = self.delta_main_.shape
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            _binio.write_u32(fh, FORMAT_VERSION)
            _binio.write_u32(fh, V)
            _binio.write_u32(fh, d)
            _binio.write_u32(fh, len(self.regions_))
            for region in self.regions_:
                _binio.write_str(fh, region)
            _binio.write_array(fh, self.delta_main_, "f4")
            for r in range(len(self.regions_)):
                _binio.write_array(fh, self.delta_region_[r], "f4")
            _binio.write_array(fh, self.context_out_, "f4")
            _binio.write_vocabulary(fh, self.vocabulary_)

    @classmethod
    def load(cls, path: str | Path, **params) -> "GeodistModel":
        with open(path, "rb") as fh:
            _binio.expect_magic(fh, MAGIC, FORMAT_VERSION)
            V, d, R = _binio.read_u32(fh), _binio.read_u32(fh), _binio.read_u32(fh)
            regions = [_binio.read_str(fh) for _ in range(R)]
            main = _binio.read_array(fh, (V, d), "f4")
            delta = np.stack([_binio.read_array(fh, (V, d), "f4") for _ in range(R)]) if R else \
                np.zeros((0, V, d), dtype=np.float32)
            out = _binio.read_array(fh, (V, d), "f4")
            vocab = _binio.read_vocabulary(fh, V)
        model = cls(dim=d, **params)
        model.vocabulary_, model.regions_ = vocab, regions
        model.delta_main_, model.delta_region_, model.context_out_ = main, delta, out
        model.n_skipped_, model.loss_history_ = 0, np.zeros(0)
        return model


def bootstrap_confidence(model: GeodistModel, documents: Sequence[Document], word: str,
                         r1: str, r2: str, n_resamples: int = 100, full_retrain: bool = False,
                         seed: int = 0, metric: str | None = None) -> BootstrapResult:
    """Spread of a word's change score over document-level bootstrap resamples.

    By default each resample only re-estimates region differentials on top of
    ``model``'s frozen global and output vectors; ``full_retrain`` refits the
    whole model on every resample instead. Training seeds are held fixed, so
    only the resampling varies between replicates.
    """
    if n_resamples < 2:
        raise ValueError("bootstrap needs at least 2 resamples")
    check_is_fitted(model, "delta_main_")
    docs = list(documents)
    rng = np.random.default_rng(seed)
    scores = np.empty(n_resamples)
    for b in range(n_resamples):
        sample = [docs[i] for i in rng.integers(0, len(docs), size=len(docs))]
        if full_retrain:
            replica = clone(model).set_params(vocabulary=model.vocabulary_, regions=model.regions_)
            replica.fit(sample)
        else:
            replica = model.refit_regions(sample)
        scores[b] = replica.word_score(word, r1, r2, metric)
    lo, hi = np.percentile(scores, [2.5, 97.5])
    return BootstrapResult(float(scores.mean()), float(scores.std()), (float(lo), float(hi)), scores)
