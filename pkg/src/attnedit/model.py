"""Toy autoregressive decoder over delay-interleaved codebook tokens.

Pre-norm transformer: a one-layer text encoder, then ``n_layers`` decoder
layers each running causal self-attention, cross-attention over the encoded
prompt and a ReLU feed-forward block. One output head per codebook predicts
that codebook's token for the current delay step.

Weights are drawn from ``Prng(weight_seed)`` in the order of ``weight_shapes``:
embeddings ~ N(0, 1), projection matrices ~ N(0, 1/fan_in), output heads
~ N(0, 4/d_model); biases start at zero and norm gains at one.

Sampling draws one uniform per sampled slot from ``Prng(sample_seed)``, step
by step, codebook 0 first. Padding slots draw nothing, and attention hooks
never touch the stream, so source and edited runs stay in lockstep.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .codec import CodecConfig, TokenGrid
from .tensor_ops import Prng, top_k_sample
from .text import Prompt

LN_EPS = 1e-5


class HookShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    codec: CodecConfig = field(default_factory=CodecConfig)
    weight_seed: int = 0
    top_k: int = 8
    temperature: float = 1.0
    ff_mult: int = 4

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_layers < 2:
            raise ValueError("n_layers must be at least 2")
        if self.top_k < 1 or not self.temperature > 0:
            raise ValueError("top_k must be >= 1 and temperature > 0")
        if not 0 <= self.weight_seed < 2**64:
            raise ValueError("weight_seed must fit in 64 bits")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def weight_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = cfg.d_model, cfg.d_model * cfg.ff_mult
    K, M = cfg.codec.K, cfg.codec.M
    shapes = {"text_emb": (cfg.vocab_size, d)}

    def block(prefix, attn_names):
        for a in attn_names:
            shapes[f"{prefix}.{a}.ln_g"] = (d,)
            shapes[f"{prefix}.{a}.ln_b"] = (d,)
            for p in ("q", "k", "v", "o"):
                shapes[f"{prefix}.{a}.w{p}"] = (d, d)
                shapes[f"{prefix}.{a}.b{p}"] = (d,)
        shapes[f"{prefix}.ff.ln_g"] = (d,)
        shapes[f"{prefix}.ff.ln_b"] = (d,)
        shapes[f"{prefix}.ff.w1"] = (d, f)
        shapes[f"{prefix}.ff.b1"] = (f,)
        shapes[f"{prefix}.ff.w2"] = (f, d)
        shapes[f"{prefix}.ff.b2"] = (d,)

    block("enc", ["self"])
    shapes["enc.out.ln_g"] = (d,)
    shapes["enc.out.ln_b"] = (d,)
    # row M of each codebook table embeds the padding / start slot
    shapes["code_emb"] = (K, M + 1, d)
    for i in range(cfg.n_layers):
        block(f"dec{i}", ["self", "cross"])
    shapes["out.ln_g"] = (d,)
    shapes["out.ln_b"] = (d,)
    shapes["head.w"] = (K, d, M)
    shapes["head.b"] = (K, M)
    return shapes


def _init_scale(name: str, shape, d_model: int) -> float | None:
    leaf = name.rsplit(".", 1)[-1]
    if name in ("text_emb", "code_emb"):
        return 1.0
    if name == "head.w":
        return 2.0 / math.sqrt(d_model)
    if leaf.startswith("w"):
        return 1.0 / math.sqrt(shape[0])
    return None


class Model:
    """Immutable weights plus the config; safe to share across threads."""

    def __init__(self, config: ModelConfig, weights: dict[str, np.ndarray]):
        self.config = config
        self.weights = weights

    def __getitem__(self, name):
        return self.weights[name]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in weight_shapes(self.config):
            h.update(name.encode())
            h.update(self.weights[name].tobytes())
        return h.hexdigest()


def init_model(config: ModelConfig) -> Model:
    rng = Prng(config.weight_seed)
    weights = {}
    for name, shape in weight_shapes(config).items():
        std = _init_scale(name, shape, config.d_model)
        if std is not None:
            w = rng.normals(int(np.prod(shape))).reshape(shape) * std
        elif name.endswith("ln_g"):
            w = np.ones(shape)
        else:
            w = np.zeros(shape)
        w = np.ascontiguousarray(w)
        w.flags.writeable = False
        weights[name] = w
    return Model(config, weights)


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d)
    out = np.zeros((n, d))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : (d - d // 2)])
    return out


def _ln(x, model, prefix):
    return _backend.kernels.layer_norm(x, model[prefix + ".ln_g"], model[prefix + ".ln_b"], LN_EPS)


def _lin(x, model, w, b):
    return _backend.kernels.linear(x, model[w], model[b])


def _ff(x, model, prefix):
    h = _ln(x, model, prefix + ".ff")
    h = np.maximum(_lin(h, model, prefix + ".ff.w1", prefix + ".ff.b1"), 0.0)
    return x + _lin(h, model, prefix + ".ff.w2", prefix + ".ff.b2")


def encode_text(model: Model, prompt: Prompt) -> np.ndarray:
    """Encode ``prompt`` into an ``L_text x d_model`` matrix."""
    cfg = model.config
    ids = np.asarray(prompt.tokens, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("empty prompt")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError(f"token ids outside vocabulary of size {cfg.vocab_size}")
    k = _backend.kernels
    L, H = len(ids), cfg.n_heads
    x = model["text_emb"][ids] + sinusoidal_positions(L, cfg.d_model)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    normed = [_ln(x[l], model, "enc.self") for l in range(L)]
    keys = np.ascontiguousarray([_lin(h, model, "enc.self.wk", "enc.self.bk") for h in normed])
    vals = np.ascontiguousarray([_lin(h, model, "enc.self.wv", "enc.self.bv") for h in normed])
    rows = []
    for l in range(L):
        q = _lin(normed[l], model, "enc.self.wq", "enc.self.bq")
        probs = k.attention_probs(q, keys, L, H, scale)
        h = x[l] + _lin(k.attention_combine(probs, vals, H), model, "enc.self.wo", "enc.self.bo")
        h = _ff(h, model, "enc")
        rows.append(_ln(h, model, "enc.out"))
    return np.ascontiguousarray(rows)


class GenerationHook:
    """Observes and may replace attention maps during ``generate``.

    ``cross`` is called at every (step, layer) with the freshly computed
    ``n_heads x L_text`` map and must return a map of the same shape.
    ``self_attn`` is only called when ``edits_self`` is true and gets the
    ``n_heads x (step + 1)`` causal map. Maps passed in are read-only.
    """

    edits_self = False

    def cross(self, step: int, layer: int, attn: np.ndarray) -> np.ndarray:
        return attn

    def self_attn(self, step: int, layer: int, attn: np.ndarray) -> np.ndarray:
        return attn


@dataclass
class AttentionTrace:
    """Attention maps used in one generation.

    ``cross[s, i]`` is the ``n_heads x L_text`` map layer ``i`` used at step
    ``s`` (after any hook); ``cross_free`` holds the maps as computed, before
    the hook. ``self_attn[s, i, :, :s+1]`` is the causal map; later columns
    are exact zeros.
    """

    cross: np.ndarray
    cross_free: np.ndarray
    self_attn: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.cross.shape[0]

    @property
    def n_layers(self) -> int:
        return self.cross.shape[1]

    @property
    def n_heads(self) -> int:
        return self.cross.shape[2]

    def cross_map(self, step: int, layer: int) -> np.ndarray:
        return self.cross[step, layer]

    def self_map(self, step: int, layer: int) -> np.ndarray:
        return self.self_attn[step, layer, :, : step + 1]

    def equals(self, other: "AttentionTrace") -> bool:
        return (
            np.array_equal(self.cross, other.cross)
            and np.array_equal(self.cross_free, other.cross_free)
            and np.array_equal(self.self_attn, other.self_attn)
        )


def _checked(out, like, what):
    out = np.ascontiguousarray(out, dtype=np.float64)
    if out.shape != like.shape:
        raise HookShapeError(f"hook returned {what} map of shape {out.shape}, expected {like.shape}")
    return out


def generate(model: Model, prompt: Prompt, sample_seed: int, hook: GenerationHook | None = None):
    """Sample one token grid for ``prompt``; returns ``(TokenGrid, AttentionTrace)``."""
    cfg = model.config
    codec = cfg.codec
    k = _backend.kernels
    K, T, S, N, H, d = codec.K, codec.T, codec.n_steps, cfg.n_layers, cfg.n_heads, cfg.d_model
    scale = 1.0 / math.sqrt(cfg.head_dim)

    text = encode_text(model, prompt)
    L = text.shape[0]
    text_k = [
        np.ascontiguousarray([_lin(row, model, f"dec{i}.cross.wk", f"dec{i}.cross.bk") for row in text])
        for i in range(N)
    ]
    text_v = [
        np.ascontiguousarray([_lin(row, model, f"dec{i}.cross.wv", f"dec{i}.cross.bv") for row in text])
        for i in range(N)
    ]
    cache_k = np.zeros((N, S, d))
    cache_v = np.zeros((N, S, d))
    positions = sinusoidal_positions(S, d)
    code_emb = model["code_emb"]

    cross_used = np.zeros((S, N, H, L))
    cross_free = np.zeros((S, N, H, L))
    self_used = np.zeros((S, N, H, S))
    delayed = np.full((S, K), codec.pad, dtype=np.int64)
    rng = Prng(sample_seed)
    codebooks = np.arange(K)

    for s in range(S):
        prev = delayed[s - 1] if s else np.full(K, codec.pad, dtype=np.int64)
        x = code_emb[codebooks, prev].sum(axis=0) + positions[s]
        for i in range(N):
            pre = f"dec{i}"
            h = _ln(x, model, pre + ".self")
            cache_k[i, s] = _lin(h, model, pre + ".self.wk", pre + ".self.bk")
            cache_v[i, s] = _lin(h, model, pre + ".self.wv", pre + ".self.bv")
            q = _lin(h, model, pre + ".self.wq", pre + ".self.bq")
            probs = k.attention_probs(q, cache_k[i], s + 1, H, scale)
            self_map = probs[:, : s + 1]
            if hook is not None and hook.edits_self:
                self_map.flags.writeable = False
                self_map = _checked(hook.self_attn(s, i, self_map), self_map, "self")
            self_used[s, i, :, : s + 1] = self_map
            attn = k.attention_combine(np.ascontiguousarray(self_map), cache_v[i, : s + 1], H)
            x = x + _lin(attn, model, pre + ".self.wo", pre + ".self.bo")

            h = _ln(x, model, pre + ".cross")
            q = _lin(h, model, pre + ".cross.wq", pre + ".cross.bq")
            cmap = k.attention_probs(q, text_k[i], L, H, scale)
            cross_free[s, i] = cmap
            if hook is not None:
                cmap.flags.writeable = False
                cmap = _checked(hook.cross(s, i, cmap), cmap, "cross")
            cross_used[s, i] = cmap
            attn = k.attention_combine(cmap, text_v[i], H)
            x = x + _lin(attn, model, pre + ".cross.wo", pre + ".cross.bo")
            x = _ff(x, model, pre)
        h = _ln(x, model, "out")
        for cb in range(K):
            if 0 <= s - cb < T:
                logits = k.linear(h, model["head.w"][cb], model["head.b"][cb])
                delayed[s, cb] = top_k_sample(logits, cfg.top_k, cfg.temperature, rng)

    tokens = np.empty((K, T), dtype=np.int64)
    for cb in range(K):
        tokens[cb] = delayed[cb : cb + T, cb]
    return TokenGrid(codec, tokens), AttentionTrace(cross_used, cross_free, self_used)
