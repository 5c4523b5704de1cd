# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

BACKEND = "compiled"


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if b.shape[0] != k:
        raise ValueError(f"inner dimensions differ: {k} vs {b.shape[0]}")
    out = np.zeros((m, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                o[i, j] += aip * b[p, j]
    return out


def linear(const double[::1] x, const double[:, ::1] weight, const double[::1] bias):
    cdef Py_ssize_t k = weight.shape[0], n = weight.shape[1]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t j, p
    cdef double xp
    for j in range(n):
        o[j] = 0.0
    for p in range(k):
        xp = x[p]
        for j in range(n):
            o[j] += xp * weight[p, j]
    for j in range(n):
        o[j] += bias[j]
    return out


def softmax_rows(const double[:, ::1] m, double scale):
    cdef Py_ssize_t r = m.shape[0], c = m.shape[1]
    out = np.empty((r, c))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double mx, s, z
    for i in range(r):
        mx = m[i, 0] * scale
        for j in range(1, c):
            z = m[i, j] * scale
            if z > mx:
                mx = z
        s = 0.0
        for j in range(c):
            z = exp(m[i, j] * scale - mx)
            o[i, j] = z
            s += z
        for j in range(c):
            o[i, j] /= s
    return out


def layer_norm(const double[::1] v, const double[::1] gain, const double[::1] bias, double eps):
    cdef Py_ssize_t n = v.shape[0], i
    cdef double mu = 0.0, var = 0.0, d, inv
    for i in range(n):
        mu += v[i]
    mu /= n
    for i in range(n):
        d = v[i] - mu
        var += d * d
    var /= n
    inv = 1.0 / sqrt(var + eps)
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = (v[i] - mu) * inv * gain[i] + bias[i]
    return out


def attention_probs(const double[::1] q, const double[:, ::1] keys,
                    Py_ssize_t n_valid, Py_ssize_t n_heads, double scale):
    cdef Py_ssize_t n_keys = keys.shape[0], d = keys.shape[1]
    cdef Py_ssize_t dh = d // n_heads
    out = np.zeros((n_heads, n_keys))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t h, l, p, off
    cdef double s, mx, tot
    for h in range(n_heads):
        off = h * dh
        mx = -1e308
        for l in range(n_valid):
            s = 0.0
            for p in range(dh):
                s += keys[l, off + p] * q[off + p]
            s *= scale
            o[h, l] = s
            if s > mx:
                mx = s
        tot = 0.0
        for l in range(n_valid):
            s = exp(o[h, l] - mx)
            o[h, l] = s
            tot += s
        for l in range(n_valid):
            o[h, l] /= tot
    return out


def attention_combine(const double[:, ::1] probs, const double[:, ::1] values, Py_ssize_t n_heads):
    cdef Py_ssize_t n_keys = probs.shape[1], d = values.shape[1]
    cdef Py_ssize_t dh = d // n_heads
    out = np.zeros(d)
    cdef double[::1] o = out
    cdef Py_ssize_t h, l, p, off
    cdef double w
    for h in range(n_heads):
        off = h * dh
        for l in range(n_keys):
            w = probs[h, l]
            for p in range(dh):
                o[off + p] += w * values[l, off + p]
    return out


def lcs_suffix_table(a, b):
    cdef cnp.int64_t[::1] aa = np.asarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] bb = np.asarray(b, dtype=np.int64)
    cdef Py_ssize_t n = aa.shape[0], m = bb.shape[0], i, j
    table = np.zeros((n + 1, m + 1), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] t = table
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if aa[i] == bb[j]:
                t[i, j] = t[i + 1, j + 1] + 1
            elif t[i + 1, j] >= t[i, j + 1]:
                t[i, j] = t[i + 1, j]
            else:
                t[i, j] = t[i, j + 1]
    return table
