"""The H^2 sigma-model action and the t-field effective actions.

Horospherical coordinates (t, s) parametrize each spin through

    S sigma_3 = n_s a_t (n_s a_t)^*,

and the action with coupling ``beta`` and field ``h`` reads

    A = beta * sum_<ij> [cosh(t_i - t_j) + (s_i - s_j)^2 exp(t_i + t_j) / 2]
        + h * sum_j [cosh t_j + s_j^2 exp(t_j) / 2],

with Gibbs measure ``exp(-A) prod_j exp(t_j) dt_j ds_j``.

Integrating out s leaves ``exp(-E(t)) prod dt`` with

    E(t) = beta * sum_<ij> cosh(t_i - t_j) + C(t) + sum_j (-t_j + h cosh t_j).

Constant conventions (the only place they are fixed):

* ``Ensemble.DELTA``: the s-integral carries ``delta(sum s)`` instead of the
  h-mass and ``C(t) = 1/2 logdet(beta * D(t))`` restricted to the zero-sum
  subspace.
* ``Ensemble.HMASS``: ``C(t) = 1/2 logdet(beta * D(t) + h diag(exp t))``.

Both drop the t-independent ``(2 pi)`` factors and keep the ``ln beta``
terms; all of it cancels in normalized expectations.  With these
conventions a uniform shift ``t -> t + c`` at h = 0 changes the
delta-constrained E by exactly ``-c``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import FieldOverflowError
from .lattice import LatticeShape, _edge_operator
from .linalg import SymmetricOperator
from .sfield import SFieldGaussian, edge_weights

SIGMA3 = np.diag([1.0, -1.0]).astype(complex)


class Ensemble(str, enum.Enum):
    DELTA = "delta"
    HMASS = "hmass"


@dataclass(frozen=True)
class ModelParams:
    beta: float
    h: float = 0.0
    ensemble: Ensemble = Ensemble.DELTA

    def __post_init__(self):
        object.__setattr__(self, "ensemble", Ensemble(self.ensemble))
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.h >= 0:
            raise ValueError(f"h must be >= 0, got {self.h}")
        if self.ensemble is Ensemble.HMASS and self.h == 0:
            raise ValueError("the h-massed ensemble needs h > 0")


@dataclass(frozen=True)
class FieldConfig:
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise ValueError(f"t and s must be equal-length vectors, got {t.shape} and {s.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("field entries must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)

    def check(self, shape: LatticeShape, params: ModelParams) -> None:
        if self.t.shape != (shape.num_sites,):
            raise ValueError(f"config has {self.t.size} sites, lattice has {shape.num_sites}")
        if params.ensemble is Ensemble.DELTA and abs(self.s.sum()) > 1e-10:
            raise ValueError(f"delta-constrained config needs sum(s) = 0, got {self.s.sum():.3g}")


def horo_to_matrix(t: float, s: float) -> np.ndarray:
    """The positive Hermitian matrix ``S sigma_3`` at horospherical point (t, s)."""
    if not (np.isfinite(t) and np.isfinite(s)):
        raise ValueError("t and s must be finite")
    if abs(t) > 700:
        raise FieldOverflowError(f"|t| = {abs(t):.6g} > 700 overflows exp(t)")
    et = np.exp(t)
    diag = np.cosh(t) + 0.5 * s * s * et
    if not np.isfinite(diag):
        raise FieldOverflowError(f"s^2 exp(t) overflows at (t, s) = ({t}, {s})")
    off = np.sinh(t) - (1j * s + 0.5 * s * s) * et
    return np.array([[diag, off], [np.conj(off), diag]], dtype=complex)


def action_matrix(spins, params: ModelParams, shape: LatticeShape, det_tol: float = 1e-8) -> float:
    """Action from the matrices ``M_j = S_j sigma_3``: beta/2 sum Tr(S_i S_j) + h/2 sum Tr(sigma_3 S_j)."""
    m = np.asarray(spins, dtype=complex)
    if m.shape != (shape.num_sites, 2, 2):
        raise ValueError(f"expected ({shape.num_sites}, 2, 2) spin matrices, got {m.shape}")
    det = np.linalg.det(m)
    bad = np.flatnonzero(np.abs(det - 1.0) > det_tol * np.maximum(1.0, np.abs(m).max(axis=(1, 2)) ** 2))
    if bad.size:
        raise ValueError(f"spin matrix at site {bad[0]} has determinant {det[bad[0]]:.6g}, expected 1")
    S = m @ SIGMA3
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    edge_tr = np.einsum("eab,eba->e", S[i], S[j]).real
    site_tr = np.einsum("ab,jba->j", SIGMA3, S).real
    return float(0.5 * params.beta * edge_tr.sum() + 0.5 * params.h * site_tr.sum())


def action_horo(config: FieldConfig, params: ModelParams, shape: LatticeShape) -> float:
    """Action in horospherical coordinates (the h-massed form)."""
    t, s = config.t, config.s
    if t.shape != (shape.num_sites,):
        raise ValueError(f"config has {t.size} sites, lattice has {shape.num_sites}")
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    w = edge_weights(t, shape.edges)
    edge = np.cosh(t[i] - t[j]) + 0.5 * (s[i] - s[j]) ** 2 * w
    with np.errstate(over="raise"):
        try:
            site = np.cosh(t) + 0.5 * s * s * np.exp(t)
        except FloatingPointError:
            raise FieldOverflowError("cosh(t) or s^2 exp(t) overflows") from None
    return float(params.beta * edge.sum() + params.h * site.sum())


def build_D(t, shape: LatticeShape, sparse: bool | None = None) -> SymmetricOperator:
    """The t-dependent operator with ``(s, D s) = sum_<ij> exp(t_i + t_j)(s_i - s_j)^2``."""
    t = np.asarray(t, dtype=float)
    if t.shape != (shape.num_sites,):
        raise ValueError(f"t has shape {t.shape}, lattice has {shape.num_sites} sites")
    return _edge_operator(shape, edge_weights(t, shape.edges), sparse)


def _cosh_sum(t: np.ndarray, shape: LatticeShape) -> float:
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    with np.errstate(over="raise"):
        try:
            return float(np.cosh(t[i] - t[j]).sum())
        except FloatingPointError:
            raise FieldOverflowError("cosh(t_i - t_j) overflows") from None


def _site_terms(t: np.ndarray, h: float) -> float:
    with np.errstate(over="raise"):
        try:
            return float(np.sum(-t + h * np.cosh(t)))
        except FloatingPointError:
            raise FieldOverflowError("cosh(t) overflows") from None


def log_det_term(t, params: ModelParams, shape: LatticeShape, sparse: bool | None = None) -> float:
    """``C(t)``: half the log determinant of the s-precision (see module docstring)."""
    return 0.5 * SFieldGaussian(t, shape, params, sparse=sparse).logdet


def effective_action(t, params: ModelParams, shape: LatticeShape, sparse: bool | None = None) -> float:
    t = np.asarray(t, dtype=float)
    return (
        params.beta * _cosh_sum(t, shape)
        + log_det_term(t, params, shape, sparse)
        + _site_terms(t, params.h)
    )


def mean_log_det_gradient(gauss: SFieldGaussian) -> np.ndarray:
    """Gradient of ``C(t)``: ``<Q_i>`` with ``Q_i = s^T (dA/dt_i) s / 2``."""
    t, shape, params = gauss.t, gauss.shape, gauss.params
    c = gauss.covariance
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    w = edge_weights(t, shape.edges)
    per_edge = 0.5 * params.beta * w * (c[i, i] + c[j, j] - 2.0 * c[i, j])
    grad = np.bincount(i, per_edge, shape.num_sites) + np.bincount(j, per_edge, shape.num_sites)
    if not gauss.constrained:
        grad += 0.5 * params.h * np.exp(t) * np.diag(c)
    return grad


def grad_effective_action(t, params: ModelParams, shape: LatticeShape) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    gauss = SFieldGaussian(t, shape, params)
    return _grad_from(gauss)


def _grad_from(gauss: SFieldGaussian) -> np.ndarray:
    t, shape, params = gauss.t, gauss.shape, gauss.params
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    sh = np.sinh(t[i] - t[j])
    coupling = np.bincount(i, sh, shape.num_sites) - np.bincount(j, sh, shape.num_sites)
    return params.beta * coupling + mean_log_det_gradient(gauss) - 1.0 + params.h * np.sinh(t)


def effective_action_and_grad(t, params: ModelParams, shape: LatticeShape) -> tuple[float, np.ndarray]:
    """Value and gradient sharing one factorization."""
    t = np.asarray(t, dtype=float)
    gauss = SFieldGaussian(t, shape, params)
    value = params.beta * _cosh_sum(t, shape) + 0.5 * gauss.logdet + _site_terms(t, params.h)
    return value, _grad_from(gauss)
