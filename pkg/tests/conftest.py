import time

import numpy as np
import pytest

from dialect_atlas.adagram import AdaGram
from dialect_atlas.corpus import Document
from dialect_atlas.huffman import build_huffman
from dialect_atlas.synth import generate, planted_spec


@pytest.fixture(scope="session")
def small_spec():
    return planted_spec(n_planted=4, n_stable=4, vocab_size=48, docs_per_region=150,
                        core_size=4, seed=3)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    return generate(small_spec)


# the planted benchmark corpus and the model every corpus-level check shares
PLANTED_EPOCHS = 3


@pytest.fixture(scope="session")
def planted():
    spec = planted_spec()
    docs, labels = generate(spec)
    return spec, docs, labels


@pytest.fixture(scope="session")
def planted_training(planted):
    """The shared planted model and its wall-clock training time in seconds."""
    _, docs, _ = planted
    start = time.perf_counter()
    model = AdaGram(min_freq=1, epochs=PLANTED_EPOCHS, seed=0).fit(docs)
    return model, time.perf_counter() - start


@pytest.fixture(scope="session")
def planted_adagram(planted_training):
    return planted_training[0]


@pytest.fixture(scope="session")
def small_adagram(small_corpus):
    docs, _ = small_corpus
    return AdaGram(dim=16, window=4, min_freq=1, seed=1).fit(docs)


def toy_adagram(freqs, dim=4, senses=2, seed=0, alpha=0.1):
    """Fitted-looking AdaGram with random parameters over words w0..w{V-1}."""
    from dialect_atlas.corpus import Vocabulary

    rng = np.random.default_rng(seed)
    V = len(freqs)
    vocab = Vocabulary(tuple(f"w{i}" for i in range(V)), np.asarray(freqs, dtype=np.int64), 1,
                       int(sum(freqs)))
    model = AdaGram(dim=dim, max_senses=senses, alpha=alpha)
    model.vocabulary_ = vocab
    model.tree_ = build_huffman(vocab.frequency)
    model.sense_in_ = rng.normal(size=(V, senses, dim)).astype(np.float32)
    model.node_out_ = rng.normal(size=(V - 1, dim)).astype(np.float32)
    model.sense_stats_ = np.zeros((V, senses))
    model.n_senses_history_ = np.zeros(0)
    return model


def labelled_doc(i, tokens, region, pos=None):
    return Document(id=str(i), tokens=tuple(tokens), pos_tags=None if pos is None else tuple(pos),
                    region_labels={"country": region})


@pytest.fixture
def make_toy_adagram():
    return toy_adagram


@pytest.fixture
def make_doc():
    return labelled_doc


# acceptance verdicts, echoed after the run so they land in the saved test log
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def verdict():
    """Record and assert one acceptance criterion: ``verdict(n, title, ok, detail)``."""
    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return record
