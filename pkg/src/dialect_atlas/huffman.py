"""Frequency-based binary coding tree for hierarchical softmax."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HuffmanTree:
    """Per-word root-to-leaf paths over ``n_inner`` inner nodes.

    ``codes[w][i]`` is the branch taken at inner node ``paths[w][i]``; the root
    is inner node ``n_inner - 1``.
    """

    codes: tuple[np.ndarray, ...]
    paths: tuple[np.ndarray, ...]

    @property
    def n_words(self) -> int:
        return len(self.codes)

    @property
    def n_inner(self) -> int:
        return self.n_words - 1

    def signs(self, word: int) -> np.ndarray:
        """+1 where the branch bit is 0, -1 where it is 1."""
        return 1.0 - 2.0 * self.codes[word]

    def gather(self, words) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated inner-node ids and branch signs over the paths of ``words``."""
        if len(words) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        nodes = np.concatenate([self.paths[w] for w in words])
        signs = 1.0 - 2.0 * np.concatenate([self.codes[w] for w in words])
        return nodes, signs


def build_huffman(frequency) -> HuffmanTree:
    """Huffman tree over word ids ``0..V-1`` with the given frequencies.

    Ties are broken by node creation order (leaves by word id first), which
    makes the tree deterministic.

    >>> tree = build_huffman([4, 2, 1])
    >>> [len(c) for c in tree.codes]
    [1, 2, 2]
    """
    freq = [int(f) for f in frequency]
    V = len(freq)
    if V < 2:
        raise ValueError("Huffman coding needs at least 2 words")
    heap = [(f, w) for w, f in enumerate(freq)]
    heapq.heapify(heap)
    parent = [0] * (2 * V - 1)
    bit = [0] * (2 * V - 1)
    next_id = V
    while len(heap) > 1:
        f1, a = heapq.heappop(heap)
        f2, b = heapq.heappop(heap)
        parent[a], bit[a] = next_id, 0
        parent[b], bit[b] = next_id, 1
        heapq.heappush(heap, (f1 + f2, next_id))
        next_id += 1
    root = 2 * V - 2
    codes, paths = [], []
    for w in range(V):
        code, path = [], []
        node = w
        while node != root:
            code.append(bit[node])
            path.append(parent[node] - V)
            node = parent[node]
        codes.append(np.asarray(code[::-1], dtype=np.uint8))
        paths.append(np.asarray(path[::-1], dtype=np.int64))
    return HuffmanTree(tuple(codes), tuple(paths))
