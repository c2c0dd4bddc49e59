"""Backend selection for the hot loops.

The compiled extension ``fiberfo._ckernels`` is used when it was built and
``FIBERFO_PURE_PYTHON`` is unset; otherwise the NumPy fallback is used.
Both backends expose the same functions and are interchangeable.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("FIBERFO_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def backends():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _csr_arrays(A):
    return (
        np.ascontiguousarray(A.indptr, dtype=np.int32),
        np.ascontiguousarray(A.indices, dtype=np.int32),
        np.ascontiguousarray(A.data, dtype=np.float64),
    )


def csr_matvec(A, x, backend=None):
    impl = get_backend(backend)
    indptr, indices, data = _csr_arrays(A)
    return np.asarray(impl.csr_matvec(indptr, indices, data, np.ascontiguousarray(x, dtype=np.float64)))


def sgs_apply(A, diag, r, backend=None):
    impl = get_backend(backend)
    indptr, indices, data = _csr_arrays(A)
    return np.asarray(
        impl.sgs_apply(
            indptr, indices, data,
            np.ascontiguousarray(diag, dtype=np.float64),
            np.ascontiguousarray(r, dtype=np.float64),
        )
    )


def project_rows(v, eps, mask=None, backend=None):
    """Apply ``v_i / (eps + |v_i|)`` in place on the masked rows of ``v``."""
    impl = get_backend(backend)
    if mask is None:
        mask = np.ones(len(v), dtype=np.uint8)
    buf = np.ascontiguousarray(v, dtype=np.float64)
    impl.project_rows(buf, float(eps), np.ascontiguousarray(mask, dtype=np.uint8))
    if buf is not v:
        v[...] = buf
    return v


def tangential_part(q, d, backend=None):
    impl = get_backend(backend)
    return np.asarray(
        impl.tangential_part(
            np.ascontiguousarray(q, dtype=np.float64), np.ascontiguousarray(d, dtype=np.float64)
        )
    )


def scatter_cells(cells, values, n_vertices, backend=None):
    impl = get_backend(backend)
    return np.asarray(
        impl.scatter_cells(
            np.ascontiguousarray(cells, dtype=np.int64),
            np.ascontiguousarray(values, dtype=np.float64),
            int(n_vertices),
        )
    )
