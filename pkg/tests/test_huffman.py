import numpy as np
import pytest
from hypothesis import given, strategies as st

from dialect_atlas.huffman import build_huffman


def test_classic_code_lengths():
    tree = build_huffman([4, 2, 1])
    assert [len(c) for c in tree.codes] == [1, 2, 2]


def test_two_leaves():
    tree = build_huffman([5, 5])
    assert [len(c) for c in tree.codes] == [1, 1]
    assert sorted(int(c[0]) for c in tree.codes) == [0, 1]


def test_needs_two_words():
    with pytest.raises(ValueError, match="at least 2"):
        build_huffman([3])


freqs = st.lists(st.integers(1, 1000), min_size=2, max_size=40)


@given(freqs)
def test_kraft_equality(f):
    tree = build_huffman(f)
    assert sum(2.0 ** -len(c) for c in tree.codes) == 1.0


@given(freqs)
def test_prefix_free_and_paths_consistent(f):
    tree = build_huffman(f)
    codes = ["".join(map(str, c)) for c in tree.codes]
    for i, a in enumerate(codes):
        for j, b in enumerate(codes):
            if i != j:
                assert not b.startswith(a)
    for code, path in zip(tree.codes, tree.paths):
        assert len(code) == len(path)
        assert path[0] == tree.n_inner - 1
        assert ((0 <= path) & (path < tree.n_inner)).all()


@given(freqs)
def test_frequent_words_get_shorter_codes(f):
    tree = build_huffman(f)
    for i in range(len(f)):
        for j in range(len(f)):
            if f[i] > f[j]:
                assert len(tree.codes[i]) <= len(tree.codes[j])


@given(freqs)
def test_optimal_weighted_length(f):
    # classical identity: cost equals the sum of all merge weights
    tree = build_huffman(f)
    import heapq
    heap = list(f)
    heapq.heapify(heap)
    merged = 0
    while len(heap) > 1:
        a, b = heapq.heappop(heap), heapq.heappop(heap)
        merged += a + b
        heapq.heappush(heap, a + b)
    assert sum(fi * len(c) for fi, c in zip(f, tree.codes)) == merged


def test_deterministic_and_signs():
    a, b = build_huffman([3, 3, 3, 3]), build_huffman([3, 3, 3, 3])
    assert all(np.array_equal(x, y) for x, y in zip(a.codes, b.codes))
    assert np.array_equal(a.signs(0), 1.0 - 2.0 * a.codes[0])
    nodes, signs = a.gather([0, 1])
    assert len(nodes) == len(signs) == len(a.codes[0]) + len(a.codes[1])
