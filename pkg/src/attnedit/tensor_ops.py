"""Dense float64 primitives and the seeded random stream.

Matrices are C-contiguous ``float64`` numpy arrays. The hot kernels dispatch
to the active backend (see ``attnedit._backend``).

Random stream
-------------
``Prng`` wraps numpy's PCG64 bit generator (PCG XSL-RR 128/64) seeded through
``numpy.random.SeedSequence(seed)``. Only the raw 64-bit outputs are used; all
derived draws are defined here so they do not depend on numpy's distribution
code:

* uniform in [0, 1): ``(raw >> 11) * 2**-53``
* standard normal: Box-Muller cosine branch, two uniforms per normal,
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``
* categorical: one uniform ``u``; the first index whose cumulative
  probability exceeds ``u * total``.
"""
from __future__ import annotations

import math

import numpy as np

from . import _backend

_TWO_NEG_53 = 2.0**-53


class Prng:
    """Seeded 64-bit stream. Single owner; never share across threads."""

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self._bits = np.random.PCG64(seed)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _TWO_NEG_53

    def uniforms(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53

    def normals(self, n: int) -> np.ndarray:
        u = self.uniforms(2 * n)
        return np.sqrt(-2.0 * np.log1p(-u[0::2])) * np.cos(2.0 * math.pi * u[1::2])


def as_matrix(data, cols: int | None = None) -> np.ndarray:
    m = np.ascontiguousarray(data, dtype=np.float64)
    if cols is not None:
        m = m.reshape(-1, cols)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return _backend.kernels.matmul(a, b)


def softmax_rows(m, scale: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``scale * m``, stabilized by subtracting the row max."""
    return _backend.kernels.softmax_rows(np.ascontiguousarray(m, dtype=np.float64), float(scale))


def layer_norm(v, gain, bias, eps: float = 1e-5) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    gain = np.ascontiguousarray(gain, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    if not (v.shape == gain.shape == bias.shape) or v.ndim != 1:
        raise ValueError(f"length mismatch: {v.shape}, {gain.shape}, {bias.shape}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _backend.kernels.layer_norm(v, gain, bias, float(eps))


def sample_categorical(probs, rng: Prng) -> int:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a nonempty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probs must be finite and nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"probs sum to {total}, not 1")
    u = rng.uniform() * total
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u, side="right"))
    # u can land on the last edge through rounding; never return a zero-mass tail
    if idx >= p.size:
        idx = int(np.flatnonzero(p)[-1])
    return idx


def top_k_sample(logits, k: int, temperature: float, rng: Prng) -> int:
    """Sample from the ``k`` largest logits (ties keep the lower index)."""
    logits = np.asarray(logits, dtype=np.float64)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    k = min(k, logits.size)
    order = np.argsort(-logits, kind="stable")[:k]
    probs = softmax_rows(logits[order].reshape(1, -1), 1.0 / temperature)[0]
    return int(order[sample_categorical(probs, rng)])
