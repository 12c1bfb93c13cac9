# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled message-passing kernels (hot inner loop of graph attention).

Same contract as numpy_backend: rows grouped by destination segment,
seg_ptr of length S+1 with non-empty segments, float64 C-contiguous input.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def segment_sum(const double[:, ::1] values, const long[::1] seg_ptr):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef Py_ssize_t n_col = values.shape[1]
    out_arr = np.zeros((n_seg, n_col), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, r, c
    for s in range(n_seg):
        for r in range(seg_ptr[s], seg_ptr[s + 1]):
            for c in range(n_col):
                out[s, c] += values[r, c]
    return out_arr


def scatter_add(const double[:, ::1] values, const long[::1] index, Py_ssize_t num_rows):
    cdef Py_ssize_t n_row = values.shape[0]
    cdef Py_ssize_t n_col = values.shape[1]
    out_arr = np.zeros((num_rows, n_col), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, tgt
    for r in range(n_row):
        tgt = index[r]
        for c in range(n_col):
            out[tgt, c] += values[r, c]
    return out_arr


def segment_softmax_forward(const double[:, ::1] scores, const long[::1] seg_ptr,
                            const long[::1] seg_ids):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef Py_ssize_t n_col = scores.shape[1]
    out_arr = np.empty((scores.shape[0], n_col), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, r, c
    cdef double mx, denom
    for s in range(n_seg):
        for c in range(n_col):
            mx = scores[seg_ptr[s], c]
            for r in range(seg_ptr[s] + 1, seg_ptr[s + 1]):
                if scores[r, c] > mx:
                    mx = scores[r, c]
            denom = 0.0
            for r in range(seg_ptr[s], seg_ptr[s + 1]):
                out[r, c] = exp(scores[r, c] - mx)
                denom += out[r, c]
            for r in range(seg_ptr[s], seg_ptr[s + 1]):
                out[r, c] /= denom
    return out_arr


def segment_softmax_backward(const double[:, ::1] alpha, const double[:, ::1] grad,
                             const long[::1] seg_ptr, const long[::1] seg_ids):
    cdef Py_ssize_t n_seg = seg_ptr.shape[0] - 1
    cdef Py_ssize_t n_col = alpha.shape[1]
    out_arr = np.empty((alpha.shape[0], n_col), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, r, c
    cdef double inner
    for s in range(n_seg):
        for c in range(n_col):
            inner = 0.0
            for r in range(seg_ptr[s], seg_ptr[s + 1]):
                inner += alpha[r, c] * grad[r, c]
            for r in range(seg_ptr[s], seg_ptr[s + 1]):
                out[r, c] = alpha[r, c] * (grad[r, c] - inner)
    return out_arr
