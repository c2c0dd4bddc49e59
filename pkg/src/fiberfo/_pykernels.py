"""NumPy/SciPy implementations of the hot loops, used when the compiled
extension is unavailable or disabled."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular


def csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n)


def sgs_apply(indptr, indices, data, diag, r):
    n = len(r)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    lower = sp.tril(A, format="csr")
    upper = sp.triu(A, format="csr")
    y = spsolve_triangular(lower, r, lower=True)
    return spsolve_triangular(upper, diag * y, lower=False)


def project_rows(v, eps, mask):
    m = mask.astype(bool)
    norms = np.sqrt(np.einsum("ij,ij->i", v[m], v[m]))
    v[m] /= (eps + norms)[:, None]


def tangential_part(q, d):
    nn = np.einsum("ij,ij->i", d, d)
    qd = np.zeros_like(nn)
    ok = nn > 1e-300
    qd[ok] = np.einsum("ij,ij->i", q[ok], d[ok]) / nn[ok]
    return q - qd[:, None] * d


def scatter_cells(cells, values, n_vertices):
    out = np.zeros((n_vertices, values.shape[1]))
    for a in range(cells.shape[1]):
        for k in range(values.shape[1]):
            out[:, k] += np.bincount(cells[:, a], weights=values[:, k], minlength=n_vertices)
    return out
