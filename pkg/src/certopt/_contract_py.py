"""Pure-numpy fallback for the pair-contraction kernel in ``_contract.pyx``.

Operates on whatever dtype it is given; the dispatcher passes long double.
"""

import numpy as np

_CHUNK_ELEMS = 1 << 21


def contract_into(tables, idx, weights, out):
    n_rows, dim = idx.shape
    n_pairs = weights.shape[0]
    step = max(1, _CHUNK_ELEMS // max(1, n_pairs))
    for start in range(0, n_rows, step):
        rows = idx[start:start + step]
        prod = tables[0][rows[:, 0]].copy()
        for l in range(1, dim):
            prod *= tables[l][rows[:, l]]
        out[start:start + step] = prod @ weights
