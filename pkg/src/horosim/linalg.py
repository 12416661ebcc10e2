"""Symmetric lattice operators and their factorizations.

Dense storage is used up to ``DENSE_LIMIT`` sites, compressed sparse rows
above.  Both backends expose the same factorization interface: log
determinant, solves, and exact Gaussian draws with covariance ``A^{-1}``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla
from scipy import sparse as sp
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import FactorizationError

DENSE_LIMIT = 4096


class SymmetricOperator:
    """A real symmetric matrix, dense (ndarray) or sparse (CSR)."""

    def __init__(self, matrix):
        self.matrix = matrix.tocsr() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x) -> np.ndarray:
        return np.asarray(self.matrix @ np.asarray(x, dtype=float))

    def quadratic_form(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matvec(x))

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix.copy()

    def scaled(self, c: float) -> "SymmetricOperator":
        return SymmetricOperator(self.matrix * c)

    def plus_diagonal(self, d) -> "SymmetricOperator":
        d = np.asarray(d, dtype=float)
        if self.is_sparse:
            return SymmetricOperator(self.matrix + sp.diags(d))
        return SymmetricOperator(self.matrix + np.diag(d))

    def grounded(self, site: int = 0) -> "SymmetricOperator":
        """Drop row and column ``site``."""
        keep = np.delete(np.arange(self.size), site)
        if self.is_sparse:
            return SymmetricOperator(self.matrix[keep][:, keep])
        return SymmetricOperator(self.matrix[np.ix_(keep, keep)])

    def cholesky(self) -> "Factor":
        if self.is_sparse:
            return SparseFactor(self.matrix)
        return DenseFactor(self.matrix)

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"SymmetricOperator({kind}, n={self.size})"


class Factor:
    """Interface of a factorization ``A = L L^T`` (up to a permutation)."""

    size: int
    logdet: float

    def solve(self, b) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.size))


class DenseFactor(Factor):
    def __init__(self, matrix: np.ndarray):
        self.size = matrix.shape[0]
        if not np.all(np.isfinite(matrix)):
            bad = int(np.flatnonzero(~np.isfinite(matrix).all(axis=1))[0])
            raise FactorizationError("non-finite matrix entry", site=bad)
        c, info = sla.lapack.dpotrf(matrix, lower=1, clean=1)
        if info > 0:
            raise FactorizationError("matrix is not positive definite", site=info - 1)
        if info < 0:
            raise FactorizationError(f"invalid argument {-info} to dpotrf")
        self.lower = c
        self.logdet = float(2.0 * np.sum(np.log(np.diag(c))))

    def solve(self, b) -> np.ndarray:
        return sla.cho_solve((self.lower, True), np.asarray(b, dtype=float))

    def sample(self, rng, size=None):
        shape = (self.size,) if size is None else (self.size, size)
        z = rng.standard_normal(shape)
        x = sla.solve_triangular(self.lower, z, lower=True, trans="T")
        return x if size is None else x.T


class SparseFactor(Factor):
    """``P A P^T = L diag(u) L^T`` from SuperLU without pivoting.

    The fill-reducing order is reverse Cuthill-McKee, applied symmetrically
    so that no off-diagonal pivoting is needed for positive definite input.
    """

    def __init__(self, matrix):
        a = sp.csr_matrix(matrix)
        self.size = a.shape[0]
        perm = csgraph.reverse_cuthill_mckee(a, symmetric_mode=True)
        b = a[perm][:, perm].tocsc()
        try:
            lu = spla.splu(
                b,
                permc_spec="NATURAL",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise FactorizationError(f"sparse factorization failed: {exc}") from None
        if not np.array_equal(lu.perm_r, np.arange(self.size)):
            raise FactorizationError("sparse factorization pivoted; matrix is not positive definite")
        u = lu.U.diagonal()
        bad = np.flatnonzero(~(u > 0))
        if bad.size:
            raise FactorizationError("matrix is not positive definite", site=int(perm[bad[0]]))
        self.perm = perm
        self.lu = lu
        self.pivots = u
        self.unit_lower_t = lu.L.T.tocsr()
        self.logdet = float(np.sum(np.log(u)))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x

    def sample(self, rng, size=None):
        shape = (self.size,) if size is None else (self.size, size)
        z = rng.standard_normal(shape)
        scale = 1.0 / np.sqrt(self.pivots)
        y = spla.spsolve_triangular(
            self.unit_lower_t, z * (scale if size is None else scale[:, None]), lower=False
        )
        x = np.empty_like(y)
        x[self.perm] = y
        return x if size is None else x.T
