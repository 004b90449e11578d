"""Sparse direct and iterative solves with residual reporting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    IndefiniteMatrixError,
    InvalidArgumentError,
    SingularSystemError,
)


@dataclass(frozen=True)
class SolveReport:
    method: str
    iterations: int
    residual: float
    success: bool
    tolerance: float


def _prepare(B, r):
    B = sp.csc_matrix(B)
    r = np.asarray(r, dtype=float)
    if B.shape[0] != B.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got {B.shape}")
    if r.shape != (B.shape[0],):
        raise InvalidArgumentError(f"right-hand side has shape {r.shape}, expected ({B.shape[0]},)")
    return B, r


def _relres(B, x, r):
    nr = np.linalg.norm(r)
    return float(np.linalg.norm(B @ x - r) / nr) if nr > 0 else float(np.linalg.norm(B @ x))


def _refine(lu, B, r, x, tol, max_steps=3):
    res = _relres(B, x, r)
    steps = 0
    while res > tol and steps < max_steps:
        x = x + lu.solve(r - B @ x)
        res = _relres(B, x, r)
        steps += 1
    return x, res, steps


def _factor(B, **kw):
    try:
        return spla.splu(B, **kw)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorization failed: {exc}") from exc


def check_symmetric(B, rtol=1e-12):
    B = sp.csr_matrix(B)
    D = abs(B - B.T)
    scale = abs(B).max() if B.nnz else 0.0
    return D.nnz == 0 or D.max() <= rtol * max(scale, 1.0)


def solve_spd(B, r, tol=1e-12):
    """Solve a symmetric positive definite system by a sparse factorization.

    The factorization uses a symmetric fill-reducing ordering and diagonal
    pivots only, so the pivots are those of ``L D L^T``; a nonpositive pivot
    means the matrix is not positive definite.

    Raises
    ------
    InvalidArgumentError
        Matrix not symmetric.
    IndefiniteMatrixError
        A pivot is nonpositive or off-diagonal pivoting was needed.
    SingularSystemError
        Exactly zero pivot.
    """
    B, r = _prepare(B, r)
    if not check_symmetric(B):
        raise InvalidArgumentError("solve_spd needs a symmetric matrix")
    n = B.shape[0]
    if n == 0:
        return np.zeros(0), SolveReport("cholesky", 0, 0.0, True, tol)
    lu = _factor(B, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                 options=dict(SymmetricMode=True))
    d = lu.U.diagonal()
    if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(d <= 0):
        bad = int(np.sum(d <= 0))
        raise IndefiniteMatrixError(f"matrix is not positive definite ({bad} nonpositive pivots)")
    x, res, steps = _refine(lu, B, r, lu.solve(r), tol)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution is not finite")
    return x, SolveReport("cholesky", steps, res, res <= tol, tol)


def solve_general(B, r, tol=1e-12):
    """Solve a general square system by sparse LU with partial pivoting."""
    B, r = _prepare(B, r)
    if B.shape[0] == 0:
        return np.zeros(0), SolveReport("lu", 0, 0.0, True, tol)
    lu = _factor(B, permc_spec="COLAMD")
    x, res, steps = _refine(lu, B, r, lu.solve(r), tol)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution is not finite")
    return x, SolveReport("lu", steps, res, res <= tol, tol)


def solve_iterative(B, r, tol=1e-12, method="cg", maxiter=None):
    """Unpreconditioned Krylov solve (``cg`` or ``gmres``), for regression use."""
    B, r = _prepare(B, r)
    count = [0]

    def cb(_):
        count[0] += 1

    if method == "cg":
        x, info = spla.cg(B, r, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    elif method == "gmres":
        x, info = spla.gmres(B, r, rtol=tol, atol=0.0, maxiter=maxiter, restart=200,
                             callback=cb, callback_type="pr_norm")
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    res = _relres(B, x, r)
    return x, SolveReport(method, count[0], res, info == 0 and res <= tol, tol)
