import sys

import numpy as np
import pytest

from csgan import SynthConfig, StyleTransferModel, TransformerConfig, synth_corpora
from csgan.corpus import BOS, EOS


def toy_config(vocab_size=20, **kw):
    """The small float64 configuration used for gradient checks."""
    base = dict(vocab_size=vocab_size, n_layers=2, hidden=8, n_heads=2, ff_dim=16,
                max_len=6, disc_hidden=16, dtype="float64")
    base.update(kw)
    return TransformerConfig(**base)


def random_records(rng, n, vocab_size, min_len=1, max_len=4):
    out = []
    for _ in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        out.append([BOS, *rng.integers(4, vocab_size, size=k).tolist(), EOS])
    return out


@pytest.fixture
def toy_model():
    return StyleTransferModel(toy_config(), seed=3)


@pytest.fixture(scope="session")
def small_synth():
    data = synth_corpora(11, 200, SynthConfig(p_sw=0.3))
    vocab = data.vocabulary()
    return data, vocab, data.encode(vocab)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
