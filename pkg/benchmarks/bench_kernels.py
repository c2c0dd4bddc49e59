"""Time the compiled and pure-Python kernel backends on a P1 vector Laplacian.

Usage::

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 5]

Prints one line per kernel with the best time for each backend and the
speedup. Both backends are checked to agree before timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from fiberfo import kernels
from fiberfo.fem import assemble_stiffness_scalar, vector_operator
from fiberfo.mesh import generate_unit_square


def cases(n):
    mesh = generate_unit_square(n)
    K = assemble_stiffness_scalar(mesh)
    A = vector_operator(K)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[0])
    d = rng.standard_normal((mesh.n_vertices, 3))
    q = rng.standard_normal((mesh.n_vertices, 3))
    vals = rng.standard_normal((mesh.n_cells, 3))
    diag = K.diagonal()
    r = rng.standard_normal(K.shape[0])
    return {
        "csr_matvec": lambda b: kernels.csr_matvec(A, x, backend=b),
        "sgs_apply": lambda b: kernels.sgs_apply(K, diag, r, backend=b),
        "project_rows": lambda b: kernels.project_rows(d.copy(), 1e-8, backend=b),
        "tangential_part": lambda b: kernels.tangential_part(q, d, backend=b),
        "scatter_cells": lambda b: kernels.scatter_cells(mesh.cells, vals, mesh.n_vertices, backend=b),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128, help="square mesh cells per side")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    avail = kernels.backends()
    print(f"backends available: {', '.join(avail)}; active: {kernels.BACKEND}; n={args.n}")
    if "cython" not in avail:
        print("compiled extension not built; only the fallback can be timed")
    for name, fn in cases(args.n).items():
        times = {}
        ref = None
        for b in avail:
            out = fn(b)
            if ref is None:
                ref = out
            elif not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
            number = 1 if name == "sgs_apply" and b == "python" else 10
            times[b] = min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number
        line = "  ".join(f"{b} {t * 1e3:9.3f} ms" for b, t in times.items())
        if len(times) == 2:
            line += f"  speedup {times['python'] / times['cython']:6.1f}x"
        print(f"{name:16s} {line}")


if __name__ == "__main__":
    main()
