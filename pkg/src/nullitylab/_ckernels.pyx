# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Semantics match ``_pykernels`` exactly."""

from cython.parallel import prange
from libc.math cimport sqrt, fabs

import numpy as np


def pair_max_distance(const double[:, ::1] A, const double[:, ::1] B,
                      bint symmetric=False, int num_threads=1):
    """Largest ``|A_i - B_j|`` with its indices; first maximum in row-major
    order wins.  With ``symmetric`` only ``j > i`` is visited."""
    cdef Py_ssize_t na = A.shape[0], nb = B.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k, j0
    cdef double acc, diff, best
    cdef double[::1] row_best = np.full(na, -1.0)
    cdef Py_ssize_t[::1] row_arg = np.full(na, -1, dtype=np.intp)
    if B.shape[1] != d:
        raise ValueError("point sets differ in dimension")
    if num_threads < 1:
        num_threads = 1
    for i in prange(na, nogil=True, schedule="static", num_threads=num_threads):
        j0 = i + 1 if symmetric else 0
        for j in range(j0, nb):
            acc = 0.0
            for k in range(d):
                diff = A[i, k] - B[j, k]
                acc = acc + diff * diff
            if acc > row_best[i]:
                row_best[i] = acc
                row_arg[i] = j
    best = -1.0
    cdef Py_ssize_t bi = -1, bj = -1
    for i in range(na):
        if row_arg[i] >= 0 and row_best[i] > best:
            best = row_best[i]
            bi = i
            bj = row_arg[i]
    if bi < 0:
        return 0.0, -1, -1
    return sqrt(best), bi, bj


def flatness_residuals(const double[:, :, :, ::1] forms, int num_threads=1):
    """Per-form max over basis 4-tuples of
    ``|<b(x,w), b(y,z)> - <b(x,z), b(y,w)>|``; forms are ``(N, k, m, m)``."""
    cdef Py_ssize_t n = forms.shape[0], kk = forms.shape[1], m = forms.shape[2]
    cdef Py_ssize_t p, a, x, y, z, w
    cdef double s1, s2, r, worst
    cdef double[::1] out = np.zeros(n)
    if num_threads < 1:
        num_threads = 1
    for p in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        worst = 0.0
        for x in range(m):
            for y in range(m):
                for z in range(m):
                    for w in range(m):
                        s1 = 0.0
                        s2 = 0.0
                        for a in range(kk):
                            s1 = s1 + forms[p, a, x, w] * forms[p, a, y, z]
                            s2 = s2 + forms[p, a, x, z] * forms[p, a, y, w]
                        r = fabs(s1 - s2)
                        if r > worst:
                            worst = r
        out[p] = worst
    return np.asarray(out)


def strain_maxabs(const double[:, :, ::1] jac, int num_threads=1):
    """Per-point ``max |J^T J - I|`` for jacobians of shape ``(N, d, m)``."""
    cdef Py_ssize_t n = jac.shape[0], d = jac.shape[1], m = jac.shape[2]
    cdef Py_ssize_t p, a, b, k
    cdef double g, worst
    cdef double[::1] out = np.zeros(n)
    if num_threads < 1:
        num_threads = 1
    for p in prange(n, nogil=True, schedule="static", num_threads=num_threads):
        worst = 0.0
        for a in range(m):
            for b in range(a, m):
                g = 0.0
                for k in range(d):
                    g = g + jac[p, k, a] * jac[p, k, b]
                if a == b:
                    g = g - 1.0
                if fabs(g) > worst:
                    worst = fabs(g)
        out[p] = worst
    return np.asarray(out)
