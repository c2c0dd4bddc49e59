# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror :mod:`fiberfo._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int32_t idx_t


def csr_matvec(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc
    return out


def sgs_apply(const idx_t[::1] indptr, const idx_t[::1] indices,
              const double[::1] data, const double[::1] diag,
              const double[::1] r):
    """One symmetric Gauss-Seidel application z = (D+U)^-1 D (D+L)^-1 r."""
    cdef Py_ssize_t n = r.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] z = out
    cdef double[::1] y = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = r[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j < i:
                acc -= data[k] * y[j]
        y[i] = acc / diag[i]
    for i in range(n - 1, -1, -1):
        acc = diag[i] * y[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j > i:
                acc -= data[k] * z[j]
        z[i] = acc / diag[i]
    return out


def project_rows(double[:, ::1] v, double eps, const cnp.uint8_t[::1] mask):
    """In place v_i <- v_i / (eps + |v_i|) on rows where mask is set."""
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double s
    for i in range(n):
        if mask[i]:
            s = 1.0 / (eps + sqrt(v[i, 0] * v[i, 0] + v[i, 1] * v[i, 1] + v[i, 2] * v[i, 2]))
            v[i, 0] *= s
            v[i, 1] *= s
            v[i, 2] *= s


def tangential_part(const double[:, ::1] q, const double[:, ::1] d):
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t i
    cdef double nn, qd
    out = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] r = out
    for i in range(n):
        nn = d[i, 0] * d[i, 0] + d[i, 1] * d[i, 1] + d[i, 2] * d[i, 2]
        if nn > 1e-300:
            qd = (q[i, 0] * d[i, 0] + q[i, 1] * d[i, 1] + q[i, 2] * d[i, 2]) / nn
        else:
            qd = 0.0
        r[i, 0] = q[i, 0] - qd * d[i, 0]
        r[i, 1] = q[i, 1] - qd * d[i, 1]
        r[i, 2] = q[i, 2] - qd * d[i, 2]
    return out


def scatter_cells(const cnp.int64_t[:, ::1] cells, const double[:, ::1] values,
                  Py_ssize_t n_vertices):
    """Sum per-cell rows onto every vertex of the cell."""
    cdef Py_ssize_t nc = cells.shape[0]
    cdef Py_ssize_t nloc = cells.shape[1]
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t c, a, k, v
    out = np.zeros((n_vertices, m), dtype=np.float64)
    cdef double[:, ::1] acc = out
    for c in range(nc):
        for a in range(nloc):
            v = cells[c, a]
            for k in range(m):
                acc[v, k] += values[c, k]
    return out
