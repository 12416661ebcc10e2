"""The Gaussian s-field at fixed t.

At fixed t the action is quadratic in s with precision

    A(t) = beta * D(t)                      (delta-constrained, sum(s) = 0)
    A(t) = beta * D(t) + h * diag(exp(t))   (h-massed)

D(t) annihilates constants, so the constrained case is handled by
grounding: with s_0 fixed to zero the reduced precision is positive
definite, and shifting a grounded draw to zero mean yields an exact draw
on the zero-sum subspace (the quadratic form is shift invariant).  The
matrix-tree theorem gives the restricted determinant,

    det(beta * D restricted to sum(s) = 0) = |Lambda| * det(reduced).
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import FieldOverflowError
from .linalg import DENSE_LIMIT, Factor, SymmetricOperator

GROUND_SITE = 0


def edge_weights(t: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """``exp(t_i + t_j)`` per bond; raises on float64 overflow."""
    with np.errstate(over="raise"):
        try:
            return np.exp(t[edges[:, 0]] + t[edges[:, 1]])
        except FloatingPointError:
            pair = t[edges[:, 0]] + t[edges[:, 1]]
            k = int(np.argmax(pair))
            raise FieldOverflowError(
                f"exp(t_i + t_j) overflows for t_i + t_j = {pair[k]:.6g}", site=int(edges[k, 0])
            ) from None


def site_weights(t: np.ndarray) -> np.ndarray:
    with np.errstate(over="raise"):
        try:
            return np.exp(t)
        except FloatingPointError:
            k = int(np.argmax(t))
            raise FieldOverflowError(f"exp(t) overflows for t = {t[k]:.6g}", site=k) from None


class SFieldGaussian:
    """Conditional law of s given t, with a cached factorization.

    ``covariance`` is the covariance of the physical s field, i.e. the
    (pseudo-)inverse of the precision above.
    """

    def __init__(self, t, shape, params, sparse: bool | None = None):
        from .model import Ensemble, build_D

        self.t = np.asarray(t, dtype=float)
        self.shape = shape
        self.params = params
        self.constrained = params.ensemble is Ensemble.DELTA
        if sparse is None:
            sparse = shape.num_sites > DENSE_LIMIT
        self.sparse = sparse
        prec = build_D(self.t, shape, sparse=sparse).scaled(params.beta)
        if not self.constrained:
            prec = prec.plus_diagonal(params.h * site_weights(self.t))
        self.precision: SymmetricOperator = prec

    @cached_property
    def factor(self) -> Factor:
        op = self.precision.grounded(GROUND_SITE) if self.constrained else self.precision
        return op.cholesky()

    @property
    def logdet(self) -> float:
        """Log determinant of the precision (restricted to sum(s) = 0 if constrained)."""
        if self.constrained:
            return self.factor.logdet + np.log(self.shape.num_sites)
        return self.factor.logdet

    def _embed(self, x: np.ndarray) -> np.ndarray:
        """Insert the grounded site and project onto zero sum (last axis)."""
        full = np.insert(x, GROUND_SITE, 0.0, axis=-1)
        return full - full.mean(axis=-1, keepdims=True)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        x = self.factor.sample(rng, size)
        return self._embed(x) if self.constrained else x

    def covariance_column(self, site: int) -> np.ndarray:
        """Column ``site`` of the covariance matrix."""
        n = self.shape.num_sites
        if not self.constrained:
            e = np.zeros(n)
            e[site] = 1.0
            return self.factor.solve(e)
        p = -np.full(n, 1.0 / n)
        p[site] += 1.0
        g = self.factor.solve(np.delete(p, GROUND_SITE))
        return self._embed(g)

    def variance(self, site: int = 0) -> float:
        return float(self.covariance_column(site)[site])

    @cached_property
    def covariance(self) -> np.ndarray:
        inv = self.factor.inverse()
        if not self.constrained:
            return 0.5 * (inv + inv.T)
        n = self.shape.num_sites
        full = np.zeros((n, n))
        keep = np.delete(np.arange(n), GROUND_SITE)
        full[np.ix_(keep, keep)] = inv
        full -= full.mean(axis=0, keepdims=True)
        full -= full.mean(axis=1, keepdims=True)
        return 0.5 * (full + full.T)
