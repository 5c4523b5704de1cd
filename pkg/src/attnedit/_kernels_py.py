"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature. Results agree to rounding (1e-12); they are not bit-identical
because summation order differs.
"""
import numpy as np

BACKEND = "python"


def matmul(a, b):
    return np.ascontiguousarray(a @ b)


def linear(x, weight, bias):
    """``x @ weight + bias`` for a single vector ``x``."""
    return x @ weight + bias


def softmax_rows(m, scale):
    z = m * scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm(v, gain, bias, eps):
    mu = v.mean()
    centered = v - mu
    var = (centered * centered).mean()
    return centered / np.sqrt(var + eps) * gain + bias


def attention_probs(q, keys, n_valid, n_heads, scale):
    """Per-head softmax of ``q . k`` over the first ``n_valid`` rows of ``keys``.

    Returns an ``(n_heads, len(keys))`` array; columns at or beyond ``n_valid``
    are exactly zero.
    """
    n_keys, d = keys.shape
    dh = d // n_heads
    out = np.zeros((n_heads, n_keys))
    k = keys[:n_valid].reshape(n_valid, n_heads, dh)
    scores = np.einsum("lhd,hd->hl", k, q.reshape(n_heads, dh)) * scale
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    out[:, :n_valid] = e / e.sum(axis=1, keepdims=True)
    return out


def attention_combine(probs, values, n_heads):
    """Weighted sum of ``values`` per head; ``probs`` is ``(n_heads, n_keys)``."""
    n_keys = probs.shape[1]
    d = values.shape[1]
    dh = d // n_heads
    v = values[:n_keys].reshape(n_keys, n_heads, dh)
    return np.einsum("hl,lhd->hd", probs, v).reshape(d)


def lcs_suffix_table(a, b):
    """``table[i, j]`` = LCS length of ``a[i:]`` and ``b[j:]``."""
    n, m = len(a), len(b)
    table = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                table[i, j] = table[i + 1, j + 1] + 1
            else:
                table[i, j] = max(table[i + 1, j], table[i, j + 1])
    return table
