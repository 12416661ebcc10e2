"""Hessian of the marginal t-action via Wick contractions of the s-field.

Write the s-precision as A(t) and ``Q_i = s^T (dA/dt_i) s / 2``.  Then

    dC/dt_i            = <Q_i>
    d2C/dt_i dt_j      = <s^T (d2A/dt_i dt_j) s> / 2 - <Q_i ; Q_j>
    <Q_i ; Q_j>        = Tr(C dA_i C dA_j) / 2

with C the s-covariance.  For the delta-constrained ensemble
``Q_i = (beta/2) U_i`` and ``(beta/2) C`` is the covariance at unit
coupling, so ``K = Cov(Q)`` and ``<Q>`` are exactly the connected
correlator ``<U_i ; U_j>`` and ``<U_i>`` at unit coupling, where the
row-sum identity ``sum_j K_ij = 2 <U_i>`` and the bond bound
``exp(t_i + t_j) <(s_i - s_j)^2> <= 1/2`` hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.sparse import linalg as spla

from .lattice import LatticeShape, _edge_operator, laplacian
from .model import Ensemble, ModelParams
from .sfield import SFieldGaussian, edge_weights

IDENTITY_TOL = 1e-10
CERTIFICATE_TOL = 1e-8
DENSE_EIG_LIMIT = 512


@dataclass(frozen=True)
class SCovariance:
    matrix: np.ndarray
    ensemble: Ensemble


@dataclass
class HessianReport:
    """Pieces of the effective-action Hessian at one t.

    ``mean_u``, ``K``, ``R`` are at unit coupling (weight ``exp(-B)``);
    ``c2`` is the Hessian of the log-determinant term and ``e2`` of the
    full effective action.
    """

    mean_u: np.ndarray
    K: np.ndarray
    R: np.ndarray
    c2: np.ndarray
    e2: np.ndarray
    bond_fluct: np.ndarray
    lambda_min: float
    k_nonnegative: bool
    row_sum_ok: bool
    schwarz_ok: bool
    bond_bound_ok: bool
    r_bound_ok: bool


def s_covariance(t, params: ModelParams, shape: LatticeShape) -> SCovariance:
    """Covariance of s given t: ``(beta D)^+`` on sum(s) = 0, or ``(beta D + h e^t)^{-1}``."""
    gauss = SFieldGaussian(np.asarray(t, dtype=float), shape, params)
    return SCovariance(gauss.covariance, params.ensemble)


def _cov_matrix(C) -> np.ndarray:
    return C.matrix if isinstance(C, SCovariance) else np.asarray(C, dtype=float)


def bond_variances(t, C, shape: LatticeShape) -> np.ndarray:
    """``exp(t_i + t_j) <(s_i - s_j)^2>`` per bond."""
    c = _cov_matrix(C)
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    return edge_weights(np.asarray(t, dtype=float), shape.edges) * (c[i, i] + c[j, j] - 2.0 * c[i, j])


def mean_U(t, C, shape: LatticeShape) -> np.ndarray:
    """``<U_i> = sum_{j~i} exp(t_i + t_j)(C_ii + C_jj - 2 C_ij)``."""
    per_edge = bond_variances(t, C, shape)
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    n = shape.num_sites
    return np.bincount(i, per_edge, n) + np.bincount(j, per_edge, n)


def _incidence(shape: LatticeShape) -> tuple[np.ndarray, np.ndarray]:
    """Signed (n, m) and unsigned (n, m) site-bond incidence matrices."""
    n, m = shape.num_sites, shape.num_edges
    signed = np.zeros((n, m))
    owner = np.zeros((n, m))
    cols = np.arange(m)
    signed[shape.edges[:, 0], cols] = 1.0
    signed[shape.edges[:, 1], cols] = -1.0
    owner[shape.edges[:, 0], cols] = 1.0
    owner[shape.edges[:, 1], cols] = 1.0
    return signed, owner


def K_matrix(t, C, shape: LatticeShape) -> np.ndarray:
    """Connected correlator ``<U_i ; U_j>`` of the Gaussian s-field.

    ``Cov((s_a - s_b)^2, (s_c - s_d)^2) = 2 (C_ac - C_ad - C_bc + C_bd)^2``,
    summed over the bonds of U_i and U_j with their ``exp(t + t)`` weights.
    """
    c = _cov_matrix(C)
    signed, owner = _incidence(shape)
    w = edge_weights(np.asarray(t, dtype=float), shape.edges)
    bond = signed.T @ c @ signed
    cov = 2.0 * (w[:, None] * bond**2 * w[None, :])
    return owner @ cov @ owner.T


def _wick_pieces(gauss: SFieldGaussian):
    """Return ``<Q>``, ``Cov(Q)`` and the bond fluctuation term for one t."""
    t, shape, params = gauss.t, gauss.shape, gauss.params
    c = gauss.covariance
    n, m = shape.num_sites, shape.num_edges
    signed, owner = _incidence(shape)
    w = 0.5 * params.beta * edge_weights(t, shape.edges)
    # rank-one pieces of dA_i / 2: one per bond, plus one per site for the h-mass
    vecs = signed
    weights = w
    owners = owner
    if not gauss.constrained:
        vecs = np.concatenate([signed, np.eye(n)], axis=1)
        weights = np.concatenate([w, 0.5 * params.h * np.exp(t)])
        owners = np.concatenate([owner, np.eye(n)], axis=1)
    gram = vecs.T @ c @ vecs
    mean_q = owners @ (weights * np.diag(gram))
    cov_q = owners @ (2.0 * weights[:, None] * gram**2 * weights[None, :]) @ owners.T
    bond = w * np.diag(gram)[:m]
    return mean_q, cov_q, bond


def hessian_effective(t, params: ModelParams, shape: LatticeShape) -> HessianReport:
    t = np.asarray(t, dtype=float)
    gauss = SFieldGaussian(t, shape, params)
    n = shape.num_sites
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    mean_q, K, bond = _wick_pieces(gauss)

    N = _edge_operator(shape, bond, sparse=False).to_dense()
    # N is the Laplacian with bond weights; its negative off-diagonal carries the
    # <s^T d2A/dt_i dt_j s>/2 term and its diagonal equals <U_i> (delta case)
    cross = -N + np.diag(np.diag(N))
    c2 = np.diag(mean_q) + cross - K
    R = c2 - (2.0 * np.diag(mean_q) - K)

    cosh_w = np.cosh(t[i] - t[j])
    e2 = params.beta * _edge_operator(shape, cosh_w, sparse=False).to_dense()
    e2 += c2 + np.diag(params.h * np.cosh(t))
    e2 = 0.5 * (e2 + e2.T)

    ref = (params.beta - 0.5) * laplacian(shape, sparse=False).to_dense() + params.h * np.eye(n)
    lam = _lambda_min(e2 - ref)

    scale = max(1.0, float(np.abs(mean_q).max()))
    schwarz = 2.0 * np.diag(mean_q) - K
    grad2 = laplacian(shape, sparse=False).to_dense()
    # |f R f| <= (1/2) sum (grad f)^2 as a matrix inequality, both signs
    r_hi = _lambda_min(0.5 * grad2 - R)
    r_lo = _lambda_min(0.5 * grad2 + R)
    return HessianReport(
        mean_u=mean_q,
        K=K,
        R=R,
        c2=c2,
        e2=e2,
        bond_fluct=bond,
        lambda_min=lam,
        k_nonnegative=bool(np.all(K >= 0.0)),
        row_sum_ok=bool(np.allclose(K.sum(axis=1), 2.0 * mean_q, rtol=IDENTITY_TOL, atol=0.0)),
        schwarz_ok=bool(_lambda_min(schwarz) >= -IDENTITY_TOL * scale),
        bond_bound_ok=bool(np.all(bond <= 0.5 + IDENTITY_TOL)),
        r_bound_ok=bool(min(r_hi, r_lo) >= -IDENTITY_TOL * scale),
    )


def _lambda_min(a: np.ndarray) -> float:
    a = 0.5 * (a + a.T)
    if a.shape[0] <= DENSE_EIG_LIMIT:
        return float(sla.eigvalsh(a, subset_by_index=[0, 0])[0])
    return float(spla.eigsh(a, k=1, which="SA", return_eigenvectors=False, tol=1e-12)[0])


def theorem2_certificate(t, params: ModelParams, shape: LatticeShape) -> float:
    """Smallest eigenvalue of ``E''(t) - (-(beta - 1/2) Delta + h)``.

    Non-negative (to ``CERTIFICATE_TOL``) whenever beta >= 3/2 in the
    delta-constrained ensemble.
    """
    return hessian_effective(t, params, shape).lambda_min
