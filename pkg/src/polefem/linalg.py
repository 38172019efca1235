"""Complex sparse linear algebra used by every time integrator.

Thin layer over scipy: CSR storage, sparse matrix-vector products and a
direct LU with fill-reducing ordering (SuperLU).  One complex scalar type is
used everywhere; real problems simply carry zero imaginary parts.  Dense
routines are oracle-grade fallbacks for the consistency tests.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(Exception):
    """Raised when factorization hits a structurally or numerically singular
    matrix; carries the solver's pivot diagnostics in the message."""


def as_csr(a):
    """Canonical CSR with complex entries, sorted indices, no duplicates."""
    m = sp.csr_matrix(a, dtype=np.complex128)
    m.sum_duplicates()
    m.sort_indices()
    return m


def matvec(a, x):
    x = np.asarray(x)
    if a.shape[1] != x.shape[0]:
        raise ValueError("dimension mismatch: %s vs %s" % (a.shape, x.shape))
    return a @ x


class Factorization:
    """LU factors of a square sparse matrix; reusable across many solves."""

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        if b.shape[0] != self.n:
            raise ValueError("rhs length %d, matrix dimension %d" % (b.shape[0], self.n))
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("non-finite solution; matrix numerically singular")
        return x


def lu_factor(a):
    """Sparse LU with COLAMD ordering.  Raises SingularMatrixError."""
    a = sp.csc_matrix(a, dtype=np.complex128)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square, got %s" % (a.shape,))
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:  # SuperLU reports the failing pivot index
        raise SingularMatrixError(str(exc)) from None
    return Factorization(lu, a.shape[0])


def solve(fact, b):
    return fact.solve(b)


def dense_solve(a, b):
    """Partial-pivoting dense solve; oracle-grade, capped at n <= 2000."""
    a = np.asarray(a, dtype=np.complex128)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if a.shape[0] > 2000:
        raise ValueError("dense_solve capped at n <= 2000")
    try:
        return scipy.linalg.solve(a, np.asarray(b, dtype=np.complex128))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(str(exc)) from None


def deterministic_csr(rows, cols, vals, shape):
    """COO triplets -> CSR with an iteration-order independent reduction.

    Duplicate (row, col) contributions are summed after sorting by value,
    so shuffling the element loop cannot change the floating-point result.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.complex128)
    if len(rows) == 0:
        return sp.csr_matrix(shape, dtype=np.complex128)
    order = np.lexsort((vals.imag, vals.real, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    is_new = np.empty(len(rows), dtype=bool)
    is_new[0] = True
    is_new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(is_new)
    summed = np.add.reduceat(vals, starts)
    m = sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=shape)
    m.sort_indices()
    return m
