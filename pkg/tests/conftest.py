import random

import numpy as np
import pytest

from attnedit import _backend
from attnedit.model import ModelConfig, init_model
from attnedit.pipeline import default_vocabulary, fixture_path, load_dataset
from attnedit.text import Prompt


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="session")
def model(vocab):
    return init_model(ModelConfig(vocab_size=len(vocab), weight_seed=7))


@pytest.fixture(scope="session")
def small_model(vocab):
    from attnedit.codec import CodecConfig

    cfg = ModelConfig(vocab_size=len(vocab), d_model=32, n_layers=2, n_heads=2,
                      codec=CodecConfig(K=2, M=16, T=12), weight_seed=3)
    return init_model(cfg)


@pytest.fixture(scope="session")
def pairs():
    return load_dataset(fixture_path())


@pytest.fixture
def prompt(vocab):
    return lambda text: Prompt.from_text(text, vocab)


@pytest.fixture(params=_backend.available())
def backend(request):
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


def random_prompts(vocab, n, seed=0, min_len=2, max_len=6):
    rng = random.Random(seed)
    words = sorted(w for w in vocab.token_to_id if w != "<unk>")
    return [Prompt.from_text(" ".join(rng.sample(words, rng.randint(min_len, max_len))), vocab)
            for _ in range(n)]


def random_map(rng: np.random.Generator, heads, width):
    m = rng.random((heads, width))
    return m / m.sum(axis=1, keepdims=True)


ACCEPTANCE = {}


def record_criterion(number, description, passed):
    ACCEPTANCE[number] = (description, passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        description, passed = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}: {description}")
