"""Sparse SPD operators and a Jacobi-preconditioned conjugate gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class SparseMatrix:
    """Square matrix in compressed-row storage.

    A thin wrapper over :class:`scipy.sparse.csr_matrix`; duplicate entries
    passed to :meth:`from_triplets` are summed, which is what element-by-element
    assembly needs.
    """

    def __init__(self, csr):
        csr = sp.csr_matrix(csr)
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("SparseMatrix must be square")
        csr.sum_duplicates()
        csr.sort_indices()
        self._csr = csr

    @classmethod
    def from_triplets(cls, rows, cols, vals, n):
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr())

    @classmethod
    def identity(cls, n):
        return cls(sp.identity(n, format="csr"))

    @property
    def n(self):
        return self._csr.shape[0]

    @property
    def indptr(self):
        return self._csr.indptr

    @property
    def indices(self):
        return self._csr.indices

    @property
    def values(self):
        return self._csr.data

    @property
    def nnz(self):
        return self._csr.nnz

    def diagonal(self):
        return self._csr.diagonal()

    def submatrix(self, rows, cols=None):
        cols = rows if cols is None else cols
        return SparseMatrix(self._csr[rows][:, cols])

    def toarray(self):
        return self._csr.toarray()

    def to_scipy(self):
        return self._csr

    def is_structurally_symmetric(self):
        pattern = self._csr.copy()
        pattern.data[:] = 1.0
        return (pattern != pattern.T).nnz == 0

    def __matmul__(self, x):
        return spmv(self, x)

    def __repr__(self):
        return f"SparseMatrix(n={self.n}, nnz={self.nnz})"


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has {x.shape[0]}")
    return A._csr @ x


@dataclass(frozen=True)
class CgReport:
    iterations: int
    residual: float
    converged: bool


def cg_solve(A, rhs, tol=DEFAULT_TOL, max_iter=None, x0=None, precondition=True,
             atol=0.0, callback=None):
    """Solve ``A x = rhs`` by preconditioned conjugate gradients.

    Parameters
    ----------
    A : SparseMatrix
        Symmetric positive definite.
    rhs : ndarray
    tol : float
        Target relative residual ``||A x - rhs|| / ||rhs||``.
    max_iter : int, optional
        Defaults to ``10 * n``.
    x0 : ndarray, optional
        Starting guess.
    precondition : bool
        Use the inverse diagonal of ``A`` (Jacobi).
    atol : float
        Absolute residual floor; the stopping threshold is
        ``max(tol * ||rhs||, atol)``.
    callback : callable, optional
        Called as ``callback(k, x)`` after each iteration.

    Returns
    -------
    x : ndarray
    report : CgReport
        ``converged`` is False when the iteration limit is hit or a
        non-positive curvature direction shows that ``A`` is not SPD.
    """
    b = np.asarray(rhs, dtype=float)
    n = A.n
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({n},)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    max_iter = 10 * n if max_iter is None else max_iter
    csr = A.to_scipy()
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0 and x0 is None:
        return x, CgReport(0, 0.0, True)
    scale = bnorm if bnorm > 0 else 1.0
    threshold = max(tol * bnorm, atol)

    if precondition:
        d = A.diagonal()
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    else:
        dinv = None

    r = b - csr @ x if x0 is not None else b.copy()
    k = 0
    breakdown = False
    # restarts recompute the true residual in case the recursive one drifted
    for _restart in range(4):
        if np.linalg.norm(r) <= threshold or breakdown or k >= max_iter:
            break
        z = r * dinv if dinv is not None else r
        p = z.copy()
        rz = r @ z
        while k < max_iter:
            q = csr @ p
            curv = p @ q
            if curv <= 0 or rz <= 0:
                log.debug("cg: non-positive curvature at iteration %d", k)
                breakdown = True
                break
            step = rz / curv
            x += step * p
            r -= step * q
            k += 1
            if callback is not None:
                callback(k, x)
            if np.linalg.norm(r) <= threshold:
                break
            z = r * dinv if dinv is not None else r
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new
        r = b - csr @ x
    rnorm = np.linalg.norm(r)
    converged = rnorm <= threshold and not breakdown
    if not converged:
        log.debug("cg: no convergence after %d iterations (residual %.3e)", k, rnorm / scale)
    return x, CgReport(k, rnorm / scale, converged)
