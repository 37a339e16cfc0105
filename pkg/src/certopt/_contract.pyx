# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled pair-contraction kernel.

For every frequency row ``f`` computes

    out[f] = sum_p weights[p] * prod_l tables[l, idx[f, l], p]

which is the inner loop of the closed-form model spectrum: ``p`` runs over
anchor pairs, ``l`` over dimensions. Arithmetic is in long double. The sum
over ``p`` is sequential, so results do not depend on how rows are split
across threads.
"""

ctypedef fused scalar:
    long double
    long double complex


def contract_into(scalar[:, :, ::1] tables, const long long[:, ::1] idx,
                  const long double[::1] weights, scalar[::1] out):
    cdef Py_ssize_t n_rows = idx.shape[0]
    cdef Py_ssize_t dim = idx.shape[1]
    cdef Py_ssize_t n_pairs = weights.shape[0]
    cdef Py_ssize_t f, p, l
    cdef scalar acc, prod
    with nogil:
        for f in range(n_rows):
            acc = 0
            for p in range(n_pairs):
                prod = weights[p]
                for l in range(dim):
                    prod = prod * tables[l, idx[f, l], p]
                acc = acc + prod
            out[f] = acc
