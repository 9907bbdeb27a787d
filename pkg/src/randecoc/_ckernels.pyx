# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance/decoding kernels.

Must agree exactly with ``_pykernels`` on every integer result.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef extern from *:
    """
    static inline int popcount64(unsigned long long x) { return __builtin_popcountll(x); }
    """
    int popcount64(unsigned long long x) nogil


cdef object _pack(const signed char[:, ::1] rows):
    """Pack each row into 64-bit blocks of sign bits (+1) and nonzero bits."""
    cdef Py_ssize_t n = rows.shape[0], length = rows.shape[1]
    cdef Py_ssize_t blocks = (length + 63) // 64
    plus_arr = np.zeros((n, blocks), dtype=np.uint64)
    nz_arr = np.zeros((n, blocks), dtype=np.uint64)
    cdef unsigned long long[:, ::1] plus = plus_arr
    cdef unsigned long long[:, ::1] nz = nz_arr
    cdef Py_ssize_t i, j, b
    cdef unsigned long long p, z
    cdef signed char v
    with nogil:
        for i in range(n):
            for b in range(blocks):
                p = 0
                z = 0
                for j in range(b * 64, min(length, b * 64 + 64)):
                    v = rows[i, j]
                    z |= (<unsigned long long>(v != 0)) << (j - b * 64)
                    p |= (<unsigned long long>(v > 0)) << (j - b * 64)
                plus[i, b] = p
                nz[i, b] = z
    return plus_arr, nz_arr


def hamming_distances(const signed char[:, ::1] words, const signed char[:, ::1] code):
    """Pairwise distances, counting positions where both symbols are nonzero and differ."""
    cdef Py_ssize_t n = words.shape[0], k = code.shape[0]
    wp_arr, wn_arr = _pack(words)
    cp_arr, cn_arr = _pack(code)
    cdef unsigned long long[:, ::1] wp = wp_arr, wn = wn_arr, cp = cp_arr, cn = cn_arr
    cdef Py_ssize_t blocks = wp.shape[1], i, c, b
    cdef int d
    out = np.empty((n, k), dtype=np.int32)
    cdef int[:, ::1] dist = out
    with nogil:
        for i in range(n):
            for c in range(k):
                d = 0
                for b in range(blocks):
                    d += popcount64((wp[i, b] ^ cp[c, b]) & wn[i, b] & cn[c, b])
                dist[i, c] = d
    return out


def hamming_decode(const signed char[:, ::1] words, const signed char[:, ::1] code):
    """Lowest-index nearest codeword for every row of ``words``."""
    cdef Py_ssize_t n = words.shape[0], k = code.shape[0], length = words.shape[1]
    wp_arr, wn_arr = _pack(words)
    cp_arr, cn_arr = _pack(code)
    cdef unsigned long long[:, ::1] wp = wp_arr, wn = wn_arr, cp = cp_arr, cn = cn_arr
    cdef Py_ssize_t blocks = wp.shape[1], i, c, b, best
    cdef int d, best_d
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] pred = out
    with nogil:
        for i in range(n):
            best = 0
            best_d = length + 1
            for c in range(k):
                d = 0
                for b in range(blocks):
                    d += popcount64((wp[i, b] ^ cp[c, b]) & wn[i, b] & cn[c, b])
                if d < best_d:
                    best_d = d
                    best = c
            pred[i] = best
    return out


def soft_distances(const double[:, ::1] outputs, const signed char[:, ::1] code, int metric):
    """metric 1: Manhattan, 2: Euclidean."""
    cdef Py_ssize_t n = outputs.shape[0], k = code.shape[0], length = outputs.shape[1]
    cdef Py_ssize_t i, c, j
    cdef double acc, diff
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] dist = out
    with nogil:
        for i in range(n):
            for c in range(k):
                acc = 0.0
                if metric == 1:
                    for j in range(length):
                        acc += fabs(outputs[i, j] - code[c, j])
                    dist[i, c] = acc
                else:
                    for j in range(length):
                        diff = outputs[i, j] - code[c, j]
                        acc += diff * diff
                    dist[i, c] = sqrt(acc)
    return out
