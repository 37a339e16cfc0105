"""Select the compiled contraction kernel when it is importable.

Set ``CERTOPT_BACKEND=python`` to force the numpy fallback.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _contract_py

try:
    if os.environ.get("CERTOPT_BACKEND", "").lower() == "python":
        raise ImportError("compiled backend disabled by CERTOPT_BACKEND")
    from . import _contract as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

_threads = 1


def set_threads(n: int) -> None:
    """Number of worker threads used to split rows in :func:`contract`."""
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def contract(tables: np.ndarray, idx: np.ndarray, weights: np.ndarray, backend: str | None = None):
    """``out[f] = sum_p weights[p] * prod_l tables[l, idx[f, l], p]``.

    Parameters
    ----------
    tables : ndarray, shape (dim, rows_per_dim, n_pairs)
        Real or complex lookup tables.
    idx : ndarray of int, shape (n_rows, dim)
    weights : ndarray, shape (n_pairs,)
    backend : {"cython", "python"}, optional
        Overrides the import-time choice.

    Returns
    -------
    ndarray of float64 or complex128
        The products and sums run in long double; only the result is
        rounded to double.
    """
    backend = backend or BACKEND
    complex_ = np.iscomplexobj(tables)
    dtype = np.clongdouble if complex_ else np.longdouble
    tables = np.ascontiguousarray(tables, dtype=dtype)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.longdouble)
    out = np.zeros(idx.shape[0], dtype=dtype)
    result_dtype = np.complex128 if complex_ else np.float64
    if idx.shape[0] == 0 or weights.shape[0] == 0:
        return out.astype(result_dtype)
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available")
        impl = _compiled.contract_into
    else:
        impl = _contract_py.contract_into

    n = idx.shape[0]
    if _threads == 1 or n < 2 * _threads:
        impl(tables, idx, weights, out)
        return out.astype(result_dtype)
    bounds = np.linspace(0, n, _threads + 1).astype(int)
    with ThreadPoolExecutor(_threads) as pool:
        jobs = [
            pool.submit(impl, tables, idx[a:b], weights, out[a:b])
            for a, b in zip(bounds[:-1], bounds[1:])
            if b > a
        ]
        for job in jobs:
            job.result()
    return out.astype(result_dtype)
