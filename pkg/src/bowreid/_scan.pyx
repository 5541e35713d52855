# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled gallery-scan kernel: dense dot-product scores for one query."""

import numpy as np


def score_gallery(const float[:, ::1] gallery, const float[::1] q):
    """Dot product of every gallery row with q, double accumulation."""
    cdef Py_ssize_t n = gallery.shape[0]
    cdef Py_ssize_t d = gallery.shape[1]
    if q.shape[0] != d:
        raise ValueError("query dimension %d != gallery dimension %d" % (q.shape[0], d))
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] ov = out
    cdef Py_ssize_t i, j
    cdef Py_ssize_t d8 = d - d % 8
    cdef double a0, a1, a2, a3, a4, a5, a6, a7
    # eight accumulators so the loop pipelines/vectorizes
    for i in range(n):
        a0 = a1 = a2 = a3 = a4 = a5 = a6 = a7 = 0.0
        for j in range(0, d8, 8):
            a0 += gallery[i, j] * q[j]
            a1 += gallery[i, j + 1] * q[j + 1]
            a2 += gallery[i, j + 2] * q[j + 2]
            a3 += gallery[i, j + 3] * q[j + 3]
            a4 += gallery[i, j + 4] * q[j + 4]
            a5 += gallery[i, j + 5] * q[j + 5]
            a6 += gallery[i, j + 6] * q[j + 6]
            a7 += gallery[i, j + 7] * q[j + 7]
        for j in range(d8, d):
            a0 += gallery[i, j] * q[j]
        ov[i] = <float> (a0 + a1 + a2 + a3 + a4 + a5 + a6 + a7)
    return out
