import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnedit.text import Alignment, Prompt, Vocabulary, align_prompts, align_sequences, tokenize

from oracles import brute_lcs_alignment, brute_lcs_length


def test_tokenize():
    assert tokenize("Acoustic guitar solo") == ["acoustic", "guitar", "solo"]
    assert tokenize("jazz, piano!") == ["jazz", "piano"]
    clean = ["slow", "cello", "line"]
    assert tokenize(" ".join(clean)) == clean
    assert tokenize(" ".join(tokenize("Lo-fi   beat; rainy_day"))) == tokenize("Lo-fi   beat; rainy_day")


@pytest.mark.parametrize("bad", ["", "   ", "!?,"])
def test_tokenize_rejects_empty(bad):
    with pytest.raises(ValueError):
        tokenize(bad)


def test_vocabulary_and_unk(tmp_path):
    v = Vocabulary.build(["jazz piano", "rock guitar"])
    assert v.token_to_id["<unk>"] == 0 and len(v) == 5
    p = Prompt.from_text("jazz banjo", v)
    assert p.tokens[1] == 0
    with pytest.raises(KeyError):
        Prompt.from_text("jazz banjo", v, allow_unk=False)
    v.save(tmp_path / "v.json")
    assert Vocabulary.load(tmp_path / "v.json").token_to_id == v.token_to_id


def test_alignment_examples():
    assert align_sequences("abc", "abc").mapping == (0, 1, 2)
    assert align_sequences("abc", "abcde").mapping == (0, 1, 2, None, None)
    assert align_sequences("axb", "aby").mapping == (0, 2, None)
    # the brute-force oracle agrees on the hand example
    assert brute_lcs_alignment("axb", "aby") == (2, (0, 2, None))


def test_align_prompts_on_fixture_refine(vocab):
    p = Prompt.from_text("acoustic guitar solo", vocab)
    p_star = Prompt.from_text("acoustic guitar solo with soft string accompaniment", vocab)
    assert align_prompts(p, p_star).mapping == (0, 1, 2, None, None, None, None)
    assert align_prompts(p, p).mapping == (0, 1, 2)


def test_alignment_invariants_validated():
    with pytest.raises(ValueError):
        Alignment((1, 0))
    with pytest.raises(ValueError):
        Alignment((0, 0))
    with pytest.raises(ValueError):
        Alignment((0, None)).check_domain(1, 3)


tokens = st.lists(st.integers(0, 3), max_size=8)


@given(tokens, tokens)
def test_alignment_properties(a, b):
    al = align_sequences(a, b)
    used = [(j, i) for j, i in enumerate(al.mapping) if i is not None]
    assert all(a[i] == b[j] for j, i in used)
    src = [i for _, i in used]
    assert src == sorted(set(src))
    assert al.n_unmatched == len(b) - brute_lcs_length(a, b)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=10))
def test_self_alignment_is_identity(a):
    assert align_sequences(a, a).mapping == tuple(range(len(a)))


def test_alignment_matches_oracle_small_exhaustive():
    lists = [seq for n in range(4) for seq in itertools.product(range(3), repeat=n)]
    for a in lists:
        for b in lists:
            assert align_sequences(a, b).mapping == brute_lcs_alignment(a, b)[1]
