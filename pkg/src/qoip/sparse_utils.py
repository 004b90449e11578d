"""Scatter of dense local blocks into CSR matrices."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def scatter_blocks(rows, cols, vals, shape):
    """Sum local blocks ``vals[..., r, c]`` into a CSR matrix.

    ``rows[..., r]`` and ``cols[..., c]`` hold global indices; entries with
    a negative index (eliminated degrees of freedom) are dropped.
    """
    R, C, vals = np.broadcast_arrays(rows[..., :, None], cols[..., None, :],
                                     np.asarray(vals, dtype=float))
    m = (R >= 0) & (C >= 0) & (vals != 0.0)
    A = sp.csr_matrix((vals[m], (R[m], C[m])), shape=shape)
    A.sum_duplicates()
    A.sort_indices()
    return A


def scatter_vector(dofs, vals, n):
    """Sum local contributions ``vals`` into a vector of length ``n``."""
    m = dofs >= 0
    return np.bincount(dofs[m], weights=np.asarray(vals, dtype=float)[m], minlength=n)
