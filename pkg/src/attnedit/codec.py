"""Toy discrete-token codec: K parallel codebooks, delay interleaving, features.

There is no audio here. ``decode_features`` maps each frame (grid column) to
a pitch class, a dynamics value and a beat probability through fixed integer
hashes, so the evaluation metrics have something deterministic to measure.

Feature hashes
--------------
``h_s(column)`` is 64-bit FNV-1a over the bytes of ``[s] + column``, each value
encoded as 4 little-endian bytes (``s`` is the salt: 1, 2, 3).

* ``pitch_class = h_1 mod 12``
* ``dynamics = (h_2 mod 1000) / 999``
* ``beat_prob = template(t mod P) * (h_3 mod 1000) / 999`` where
  ``template(0) = 1``, ``template(1) = template(P-1) = 0.25`` and 0 elsewhere.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

BEAT_PERIOD = 10
PITCH_SALT, DYNAMICS_SALT, BEAT_SALT = 1, 2, 3


@dataclass(frozen=True)
class CodecConfig:
    K: int = 2
    M: int = 64
    T: int = 64
    frame_rate: float = 25.0

    def __post_init__(self):
        if self.K < 1 or self.M < 2 or self.T < 1 or not self.frame_rate > 0:
            raise ValueError(f"invalid codec config: {self}")

    @property
    def n_steps(self) -> int:
        return self.T + self.K - 1

    @property
    def pad(self) -> int:
        return self.M


@dataclass(frozen=True, eq=False)
class TokenGrid:
    config: CodecConfig
    tokens: np.ndarray = field(repr=False)

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.int64)
        cfg = self.config
        if tokens.shape != (cfg.K, cfg.T):
            raise ValueError(f"grid shape {tokens.shape} != ({cfg.K}, {cfg.T})")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.M):
            raise ValueError(f"tokens must lie in [0, {cfg.M})")
        tokens.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)

    def __eq__(self, other):
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.tokens, other.tokens)

    def __hash__(self):
        return hash((self.config, self.tokens.tobytes()))

    def to_dict(self) -> dict:
        cfg = self.config
        return {"K": cfg.K, "M": cfg.M, "T": cfg.T, "tokens": self.tokens.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict, frame_rate: float = 25.0) -> "TokenGrid":
        cfg = CodecConfig(K=int(obj["K"]), M=int(obj["M"]), T=int(obj["T"]), frame_rate=frame_rate)
        return cls(cfg, np.asarray(obj["tokens"], dtype=np.int64).reshape(cfg.K, cfg.T))

    @classmethod
    def from_json(cls, text: str, frame_rate: float = 25.0) -> "TokenGrid":
        return cls.from_dict(json.loads(text), frame_rate)


@dataclass(frozen=True, eq=False)
class FeatureFrames:
    pitch_class: np.ndarray
    dynamics: np.ndarray
    beat_prob: np.ndarray
    frame_rate: float

    def __len__(self):
        return len(self.pitch_class)


def delay_steps(config: CodecConfig) -> int:
    return config.n_steps


def apply_delay_pattern(grid: TokenGrid) -> list[tuple[int, int, int]]:
    """Flatten ``grid`` into ``(step, codebook, token)`` slots, step-major.

    Codebook ``k`` frame ``t`` lands on step ``t + k``; slots with no frame
    carry the padding index ``M``.
    """
    cfg = grid.config
    slots = []
    for step in range(cfg.n_steps):
        for k in range(cfg.K):
            t = step - k
            token = int(grid.tokens[k, t]) if 0 <= t < cfg.T else cfg.pad
            slots.append((step, k, token))
    return slots


def delay_matrix(grid: TokenGrid) -> np.ndarray:
    """Interleaved view as an ``(n_steps, K)`` array with padding ``M``."""
    cfg = grid.config
    out = np.full((cfg.n_steps, cfg.K), cfg.pad, dtype=np.int64)
    for k in range(cfg.K):
        out[k : k + cfg.T, k] = grid.tokens[k]
    return out


def invert_delay_pattern(slots, config: CodecConfig) -> TokenGrid:
    """Rebuild the grid from a complete delay schedule.

    Raises ValueError on missing, duplicated or out-of-range slots and on
    padding where a frame belongs (or a frame where padding belongs).
    """
    seen = {}
    for step, k, token in slots:
        if not (0 <= step < config.n_steps and 0 <= k < config.K):
            raise ValueError(f"slot ({step}, {k}) outside the schedule")
        if (step, k) in seen:
            raise ValueError(f"slot ({step}, {k}) appears twice")
        seen[(step, k)] = int(token)
    expected = config.n_steps * config.K
    if len(seen) != expected:
        raise ValueError(f"incomplete schedule: {len(seen)} of {expected} slots")
    tokens = np.empty((config.K, config.T), dtype=np.int64)
    for (step, k), token in seen.items():
        t = step - k
        if 0 <= t < config.T:
            if token == config.pad:
                raise ValueError(f"padding at frame slot ({step}, {k})")
            tokens[k, t] = token
        elif token != config.pad:
            raise ValueError(f"token {token} in padding slot ({step}, {k})")
    return TokenGrid(config, tokens)


def fnv1a64(values, salt: int) -> int:
    h = FNV_OFFSET
    for byte in struct.pack(f"<{len(values) + 1}I", salt, *values):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def beat_template(phase: int, period: int = BEAT_PERIOD) -> float:
    if phase == 0:
        return 1.0
    if phase == 1 or phase == period - 1:
        return 0.25
    return 0.0


def decode_features(grid: TokenGrid, period: int = BEAT_PERIOD) -> FeatureFrames:
    cfg = grid.config
    pitch = np.empty(cfg.T, dtype=np.int64)
    dyn = np.empty(cfg.T)
    beat = np.empty(cfg.T)
    for t in range(cfg.T):
        col = [int(x) for x in grid.tokens[:, t]]
        pitch[t] = fnv1a64(col, PITCH_SALT) % 12
        dyn[t] = (fnv1a64(col, DYNAMICS_SALT) % 1000) / 999.0
        beat[t] = beat_template(t % period, period) * ((fnv1a64(col, BEAT_SALT) % 1000) / 999.0)
    return FeatureFrames(pitch, dyn, beat, cfg.frame_rate)
