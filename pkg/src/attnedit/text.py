"""Word-level prompt tokenization, vocabulary, and prompt alignment."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from . import _backend

UNK = "<unk>"
_WORD = re.compile(r"[^\W_]+")


def tokenize(raw: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    words = _WORD.findall(raw.lower())
    if not words:
        raise ValueError(f"prompt has no tokens: {raw!r}")
    return words


class Vocabulary:
    """Token -> id map. Id 0 is the out-of-vocabulary token."""

    def __init__(self, token_to_id: dict[str, int]):
        if token_to_id.get(UNK) != 0:
            raise ValueError(f"vocabulary must map {UNK!r} to 0")
        ids = sorted(token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be 0..n-1 without gaps")
        self.token_to_id = dict(token_to_id)

    def __len__(self):
        return len(self.token_to_id)

    def __contains__(self, word):
        return word in self.token_to_id

    @classmethod
    def build(cls, texts) -> "Vocabulary":
        words = sorted({w for text in texts for w in tokenize(text)} - {UNK})
        return cls({UNK: 0, **{w: i + 1 for i, w in enumerate(words)}})

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path):
        Path(path).write_text(json.dumps(self.token_to_id, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    def encode(self, words, allow_unk: bool = True) -> list[int]:
        ids = []
        for w in words:
            if w in self.token_to_id:
                ids.append(self.token_to_id[w])
            elif allow_unk:
                ids.append(0)
            else:
                raise KeyError(f"out-of-vocabulary token {w!r}")
        return ids


@dataclass(frozen=True)
class Prompt:
    raw: str
    words: tuple[str, ...]
    tokens: tuple[int, ...]

    @classmethod
    def from_text(cls, raw: str, vocab: Vocabulary, allow_unk: bool = True) -> "Prompt":
        words = tokenize(raw)
        return cls(raw, tuple(words), tuple(vocab.encode(words, allow_unk)))

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Alignment:
    """``mapping[j]`` is the source index for target token ``j``, or None."""

    mapping: tuple[int | None, ...]

    def __post_init__(self):
        used = [i for i in self.mapping if i is not None]
        if any(b <= a for a, b in zip(used, used[1:])):
            raise ValueError("alignment must be strictly increasing over mapped tokens")
        if used and used[0] < 0:
            raise ValueError("negative source index")

    def __len__(self):
        return len(self.mapping)

    def __getitem__(self, j):
        return self.mapping[j]

    @property
    def n_unmatched(self) -> int:
        return sum(i is None for i in self.mapping)

    def check_domain(self, source_len: int, target_len: int):
        if len(self.mapping) != target_len:
            raise ValueError(f"alignment covers {len(self.mapping)} target tokens, expected {target_len}")
        if any(i is not None and i >= source_len for i in self.mapping):
            raise ValueError(f"alignment points past the {source_len} source tokens")

    @classmethod
    def identity(cls, n: int) -> "Alignment":
        return cls(tuple(range(n)))


def align_sequences(source, target) -> Alignment:
    """Longest common subsequence alignment of ``target`` onto ``source``.

    Among all maximum matchings the one with the lexicographically smallest
    target indices is chosen, then the smallest source indices.
    """
    codes: dict = {}
    source = [codes.setdefault(x, len(codes)) for x in source]
    target = [codes.setdefault(x, len(codes)) for x in target]
    table = _backend.kernels.lcs_suffix_table(source, target)
    mapping: list[int | None] = [None] * len(target)
    i = j = 0
    need = int(table[0, 0])
    while need:
        found = False
        for jj in range(j, len(target)):
            for ii in range(i, len(source)):
                if source[ii] == target[jj] and table[ii + 1, jj + 1] == need - 1:
                    mapping[jj] = ii
                    i, j, need = ii + 1, jj + 1, need - 1
                    found = True
                    break
            if found:
                break
    return Alignment(tuple(mapping))


def align_prompts(p: Prompt, p_star: Prompt) -> Alignment:
    return align_sequences(p.tokens, p_star.tokens)
