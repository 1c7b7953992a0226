"""Adaptive skip-gram: multi-sense embeddings under a stick-breaking sense prior.

Every word owns up to ``max_senses`` input vectors. Context words are scored
with a hierarchical softmax over a Huffman tree, so context likelihoods are
exact and sense posteriors can be computed in closed form. Training is online
EM: the E-step disambiguates each occurrence with the current parameters, the
M-step takes a posterior-weighted gradient step and adds the posterior to the
word's sense pseudo-counts.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy.special import expit, log_expit, softmax
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _binio
from ._common import check_positive, context_window, linear_lr, resolve_vocabulary, token_lists
from .corpus import Vocabulary
from .huffman import HuffmanTree, build_huffman

logger = logging.getLogger(__name__)

MAGIC = b"ADGM"
FORMAT_VERSION = 1
PROGRESS_EVERY = 1_000_000


def stick_breaking_prior(counts: np.ndarray, alpha: float) -> np.ndarray:
    """Expected sense probabilities under Beta(1, alpha) sticks given pseudo-counts.

    Stick ``k`` has posterior Beta(1 + n_k, alpha + sum_{r>k} n_r); the result
    is ``E[b_k] * prod_{r<k} (1 - E[b_r])``. It sums to less than one, the
    rest being the mass beyond the truncation.
    """
    counts = np.asarray(counts, dtype=np.float64)
    tail = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0.0]))
    a = 1.0 + counts
    b = alpha + tail
    mean = a / (a + b)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - mean)[:-1]))
    return mean * remaining


def posterior_weighted_loss_and_grad(sense_vecs, node_vecs, nodes, signs, weights):
    """Loss ``-sum_k weights[k] * sum_c log p(c | sense k)`` and its gradients.

    ``nodes``/``signs`` concatenate the tree paths of all context words, so the
    inner sum runs over path entries. Returns ``(loss, grad_senses, grad_rows)``
    where ``grad_rows[j]`` is the gradient for inner node ``nodes[j]`` (rows
    repeat when a node appears on several paths).
    """
    X = np.asarray(sense_vecs, dtype=np.float64)
    O = np.asarray(node_vecs[nodes], dtype=np.float64)
    margins = signs[None, :] * (X @ O.T)
    loss = -float(weights @ log_expit(margins).sum(axis=1))
    coef = -(weights[:, None] * signs[None, :]) * expit(-margins)
    return loss, coef @ O, coef.T @ X


@numba.njit(cache=True, nogil=True)
def _prior_into(counts, alpha, out):
    K = counts.shape[0]
    tail = 0.0
    for k in range(K):
        tail += counts[k]
    remaining = 1.0
    for k in range(K):
        tail -= counts[k]
        if tail < 0.0:
            tail = 0.0
        a = 1.0 + counts[k]
        mean = a / (a + alpha + tail)
        out[k] = mean * remaining
        remaining *= 1.0 - mean


@numba.njit(cache=True, nogil=True)
def _log_expit(x):
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@numba.njit(cache=True, nogil=True)
def _train_document(sense_in, node_out, stats, ids, reduced, lrs, path_nodes, path_signs,
                    path_start, path_len, alpha, threshold):
    """One online-EM pass over a document; returns the number of senses scored."""
    n = ids.shape[0]
    K = sense_in.shape[1]
    d = sense_in.shape[2]
    prior = np.empty(K)
    active = np.empty(K, dtype=np.int64)
    z = np.empty(K)
    max_len = 0
    for w in range(path_len.shape[0]):
        max_len = max(max_len, path_len[w])
    cap = 2 * (reduced.max() if n > 0 else 0) * max_len
    nodes = np.empty(cap, dtype=np.int64)
    signs = np.empty(cap)
    o_buf = np.empty((cap, d))
    x_buf = np.empty((K, d))
    senses_used = 0
    for i in range(n):
        b = reduced[i]
        L = 0
        for j in range(max(0, i - b), min(n, i + b + 1)):
            if j == i:
                continue
            c = ids[j]
            for q in range(path_start[c], path_start[c] + path_len[c]):
                nodes[L] = path_nodes[q]
                signs[L] = path_signs[q]
                L += 1
        if L == 0:
            continue
        w = ids[i]
        _prior_into(stats[w], alpha, prior)
        A = 0
        for k in range(K):
            if prior[k] >= threshold:
                active[A] = k
                A += 1
        O = o_buf[:L]
        X = x_buf[:A]
        for e in range(L):
            for t in range(d):
                O[e, t] = node_out[nodes[e], t]
        for a in range(A):
            for t in range(d):
                X[a, t] = sense_in[w, active[a], t]
        dots = np.dot(X, O.T)
        coef = np.empty((A, L))
        top = -np.inf
        for a in range(A):
            ll = 0.0
            for e in range(L):
                m = signs[e] * dots[a, e]
                ll += _log_expit(m)
                # d(-log sigmoid(m)) / d(dot)
                coef[a, e] = -signs[e] / (1.0 + np.exp(m))
            z[a] = np.log(prior[active[a]]) + ll
            top = max(top, z[a])
        norm = 0.0
        for a in range(A):
            z[a] = np.exp(z[a] - top)
            norm += z[a]
        for a in range(A):
            z[a] /= norm
            for e in range(L):
                coef[a, e] *= z[a]
        grad_x = np.dot(coef, O)
        grad_o = np.dot(coef.T, X)
        lr = lrs[i]
        for e in range(L):
            for t in range(d):
                node_out[nodes[e], t] -= lr * grad_o[e, t]
        for a in range(A):
            k = active[a]
            for t in range(d):
                sense_in[w, k, t] -= lr * grad_x[a, t]
            stats[w, k] += z[a]
        senses_used += A
    return senses_used


class AdaGram(BaseEstimator):
    """Multi-sense skip-gram with a Dirichlet-process prior over senses.

    Training never looks at region labels: documents contribute only their
    token sequences (plain token lists are accepted too).

    Parameters
    ----------
    dim, window, epochs, lr, min_lr, min_freq, seed
        Skip-gram settings; the learning rate decays linearly to ``min_lr``.
    alpha : float
        Concentration of the stick-breaking prior; larger values admit more senses.
    max_senses : int
        Truncation level of the prior.
    sense_threshold : float
        Senses whose prior falls below this are inactive.
    workers : int
        ``> 1`` trains lock-free over threads (not reproducible).
    """

    def __init__(self, dim=100, window=10, epochs=1, alpha=0.1, max_senses=30,
                 sense_threshold=1e-17, lr=0.025, min_lr=0.0001, min_freq=20, seed=0,
                 workers=1, vocabulary=None):
        self.dim = dim
        self.window = window
        self.epochs = epochs
        self.alpha = alpha
        self.max_senses = max_senses
        self.sense_threshold = sense_threshold
        self.lr = lr
        self.min_lr = min_lr
        self.min_freq = min_freq
        self.seed = seed
        self.workers = workers
        self.vocabulary = vocabulary

    def fit(self, documents, y=None):
        for name in ("dim", "window", "alpha", "max_senses", "lr", "workers"):
            check_positive(name, getattr(self, name))
        check_positive("epochs", self.epochs, allow_zero=True)
        tokens = token_lists(documents)
        vocab = resolve_vocabulary(self.vocabulary, tokens, self.min_freq)
        self._init_params(vocab)
        encoded = [vocab.encode(t) for t in tokens]
        self.n_senses_history_ = self._run_epochs(encoded)
        return self

    def _init_params(self, vocab: Vocabulary):
        V, K, d = len(vocab), self.max_senses, self.dim
        rng = np.random.default_rng(self.seed)
        self.vocabulary_ = vocab
        self.tree_ = build_huffman(vocab.frequency)
        self.sense_in_ = rng.uniform(-0.5 / d, 0.5 / d, size=(V, K, d)).astype(np.float32)
        self.node_out_ = np.zeros((V - 1, d), dtype=np.float32)
        self.sense_stats_ = np.zeros((V, K), dtype=np.float64)

    def _run_epochs(self, encoded):
        total = float(self.epochs * sum(len(ids) for ids in encoded))
        seq = np.random.SeedSequence(self.seed)
        if self.workers == 1:
            rng = np.random.default_rng(seq.spawn(1)[0])
            history, done = [], 0
            for _ in range(self.epochs):
                done = self._train_shard(encoded, rng, done, total, 1, history)
            return np.asarray(history)
        rngs = [np.random.default_rng(s) for s in seq.spawn(self.workers)]
        shards = [encoded[w::self.workers] for w in range(self.workers)]
        histories = [[] for _ in range(self.workers)]

        def work(w):
            done = 0
            for _ in range(self.epochs):
                done = self._train_shard(shards[w], rngs[w], done, total, self.workers, histories[w])

        with ThreadPoolExecutor(self.workers) as pool:
            list(pool.map(work, range(self.workers)))
        return np.asarray([h for hist in histories for h in hist])

    def _flat_tree(self):
        tree = self.tree_
        lengths = np.asarray([len(p) for p in tree.paths], dtype=np.int64)
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1])).astype(np.int64)
        nodes = np.concatenate(tree.paths).astype(np.int64)
        signs = 1.0 - 2.0 * np.concatenate(tree.codes).astype(np.float64)
        return nodes, signs, starts, lengths

    def _train_shard(self, encoded, rng, done, total, scale, history):
        flat = self._flat_tree()
        next_report = PROGRESS_EVERY
        for ids in encoded:
            n = len(ids)
            reduced = rng.integers(1, self.window + 1, size=n).astype(np.int64)
            lrs = linear_lr(self.lr, self.min_lr, (done + np.arange(n)) * scale, total)
            used = _train_document(self.sense_in_, self.node_out_, self.sense_stats_,
                                   ids.astype(np.int64), reduced, lrs, *flat,
                                   float(self.alpha), float(self.sense_threshold))
            if n:
                history.append(used / n)
            done += n
            if done * scale >= next_report:
                logger.info("adagram: %d tokens, lr %.6f", done * scale, lrs[-1] if n else self.lr)
                next_report += PROGRESS_EVERY
        return done

    # -- queries -----------------------------------------------------------

    def _word_id(self, word) -> int:
        check_is_fitted(self, "sense_in_")
        if isinstance(word, (int, np.integer)):
            return int(word)
        return self.vocabulary_[word]

    def _context_ids(self, context) -> np.ndarray:
        ids = [c if isinstance(c, (int, np.integer)) else self.vocabulary_.token_to_id.get(c)
               for c in context]
        return np.asarray([c for c in ids if c is not None], dtype=np.int64)

    def raw_prior(self, word) -> np.ndarray:
        """Unnormalised stick-breaking expectations for all ``max_senses`` senses."""
        return stick_breaking_prior(self.sense_stats_[self._word_id(word)], self.alpha)

    def active_senses(self, word) -> np.ndarray:
        return np.flatnonzero(self.raw_prior(word) >= self.sense_threshold)

    def sense_prior(self, word) -> np.ndarray:
        """Prior over senses renormalised to the active ones; zeros elsewhere."""
        raw = self.raw_prior(word)
        prior = np.where(raw >= self.sense_threshold, raw, 0.0)
        return prior / prior.sum()

    def n_senses(self, word, min_prob: float | None = None) -> int:
        """Number of senses whose normalised prior reaches ``min_prob``.

        Defaults to counting active senses.
        """
        if min_prob is None:
            return len(self.active_senses(word))
        return int((self.sense_prior(word) >= min_prob).sum())

    def _check_active(self, w: int, sense: int):
        if sense not in set(self.active_senses(w).tolist()):
            raise ValueError(f"sense {sense} of {self.vocabulary_.id_to_token[w]!r} is inactive")

    def context_likelihood(self, word, sense: int, context_word) -> float:
        """Tree-softmax probability of ``context_word`` given one sense of ``word``."""
        w = self._word_id(word)
        self._check_active(w, sense)
        c = self._word_id(context_word)
        nodes, signs = self.tree_.gather([c])
        x = self.sense_in_[w, sense].astype(np.float64)
        margins = signs * (self.node_out_[nodes].astype(np.float64) @ x)
        return float(np.exp(log_expit(margins).sum()))

    def context_log_likelihoods(self, word, context) -> np.ndarray:
        """Sum of context log-likelihoods per sense (``-inf`` for inactive senses)."""
        w = self._word_id(word)
        out = np.full(self.max_senses, -np.inf)
        active = self.active_senses(w)
        nodes, signs = self.tree_.gather(self._context_ids(context))
        X = self.sense_in_[w, active].astype(np.float64)
        O = self.node_out_[nodes].astype(np.float64)
        out[active] = log_expit(signs[None, :] * (X @ O.T)).sum(axis=1)
        return out

    def disambiguate(self, word, context) -> np.ndarray:
        """Posterior over senses of ``word`` given context tokens (or ids)."""
        w = self._word_id(word)
        prior = self.sense_prior(w)
        active = prior > 0
        post = np.zeros(self.max_senses)
        logp = np.log(prior[active]) + self.context_log_likelihoods(w, context)[active]
        post[active] = softmax(logp)
        return post

    def sense_vector(self, word, sense: int) -> np.ndarray:
        return self.sense_in_[self._word_id(word), sense].astype(np.float64)

    def nearest_neighbors(self, word, sense: int, k: int = 10) -> list[tuple[str, int, float]]:
        """Top-``k`` active senses of other words by cosine similarity."""
        w = self._word_id(word)
        self._check_active(w, sense)
        if k <= 0:
            return []
        query = self.sense_vector(w, sense)
        query = query / (np.linalg.norm(query) or 1.0)
        cands = []
        for other in range(len(self.vocabulary_)):
            if other == w:
                continue
            for s in self.active_senses(other):
                v = self.sense_in_[other, s].astype(np.float64)
                sim = float(v @ query / (np.linalg.norm(v) or 1.0))
                cands.append((-sim, other, int(s)))
        cands.sort()
        return [(self.vocabulary_.id_to_token[o], s, -neg) for neg, o, s in cands[:k]]

    # -- persistence -------------------------------------------------------

    def active_mask(self) -> np.ndarray:
        check_is_fitted(self, "sense_in_")
        return np.stack([stick_breaking_prior(row, self.alpha) >= self.sense_threshold
                         for row in self.sense_stats_])

    def save(self, path: str | Path) -> None:
        check_is_fitted(self, "sense_in_")
        V, K, d = self.sense_in_.shape
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            _binio.write_u32(fh, FORMAT_VERSION)
            _binio.write_u32(fh, V)
            _binio.write_u32(fh, d)
            _binio.write_u32(fh, K)
            _binio.write_f64(fh, self.alpha)
            _binio.write_f64(fh, self.sense_threshold)
            fh.write(np.packbits(self.active_mask().ravel(), bitorder="little").tobytes())
            _binio.write_array(fh, self.sense_stats_, "f8")
            _binio.write_array(fh, self.sense_in_, "f4")
            for code, path_ in zip(self.tree_.codes, self.tree_.paths):
                _binio.write_u32(fh, len(code))
                _binio.write_array(fh, code, "u1")
                _binio.write_array(fh, path_, "u4")
            _binio.write_array(fh, self.node_out_, "f4")
            _binio.write_vocabulary(fh, self.vocabulary_)

    @classmethod
    def load(cls, path: str | Path, **params) -> "AdaGram":
        with open(path, "rb") as fh:
            _binio.expect_magic(fh, MAGIC, FORMAT_VERSION)
            V, d, K = _binio.read_u32(fh), _binio.read_u32(fh), _binio.read_u32(fh)
            alpha, threshold = _binio.read_f64(fh), _binio.read_f64(fh)
            fh.read((V * K + 7) // 8)
            stats = _binio.read_array(fh, (V, K), "f8")
            sense_in = _binio.read_array(fh, (V, K, d), "f4")
            codes, paths = [], []
            for _ in range(V):
                n = _binio.read_u32(fh)
                codes.append(_binio.read_array(fh, (n,), "u1"))
                paths.append(_binio.read_array(fh, (n,), "u4").astype(np.int64))
            node_out = _binio.read_array(fh, (V - 1, d), "f4")
            vocab = _binio.read_vocabulary(fh, V)
        model = cls(dim=d, alpha=alpha, max_senses=K, sense_threshold=threshold, **params)
        model.vocabulary_ = vocab
        model.tree_ = HuffmanTree(tuple(codes), tuple(paths))
        model.sense_in_, model.node_out_, model.sense_stats_ = sense_in, node_out, stats
        model.n_senses_history_ = np.zeros(0)
        return model

    def mean_active_senses(self, words: Sequence | None = None, min_prob: float | None = None) -> float:
        words = range(len(self.vocabulary_)) if words is None else words
        return float(np.mean([self.n_senses(w, min_prob) for w in words]))
