"""Estimators and bound checks built on top of the t-field chains.

Bound checks compare a Monte-Carlo left-hand side against an analytic
right-hand side and pass when ``lhs <= rhs + 3 * mc_error``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg as sla

from .errors import FactorizationError, FieldOverflowError, HorosimError
from .lattice import LatticeShape, build_lattice, laplacian, laplacian_eigenvalues, weighted_laplacian
from .linalg import SymmetricOperator
from .model import Ensemble, FieldConfig, ModelParams, build_D
from .sampler import ChainConfig, run_chains
from .sfield import SFieldGaussian
from .stats import Estimate, batch_means, function_of_means

BOUND_SIGMAS = 3.0
SHIFT_RTOL = 1e-9
MIN_ESS_FRACTION = 0.10


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    mc_error: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + BOUND_SIGMAS * self.mc_error)

    def as_dict(self) -> dict:
        return {**asdict(self), "slack": self.slack, "passed": self.passed}


# ---------------------------------------------------------------- symmetry-breaking observable


def observable_theorem1(config: FieldConfig, site: int = 0) -> float:
    """``(Tr sigma_3 S_0)^2 = (2 cosh t_0 + s_0^2 exp(t_0))^2``."""
    t0, s0 = float(config.t[site]), float(config.s[site])
    if abs(t0) > 700:
        raise FieldOverflowError(f"|t_0| = {abs(t0):.6g} overflows", site=site)
    value = (2.0 * math.cosh(t0) + s0 * s0 * math.exp(t0)) ** 2
    if not math.isfinite(value):
        raise FieldOverflowError("observable overflows", site=site)
    return value


def theorem1_given_t(t0: float, c00: float) -> float:
    """The same observable averaged over a centred Gaussian s_0 with variance ``c00``.

    Uses ``<s_0^2> = c00`` and ``<s_0^4> = 3 c00^2``.
    """
    ch, e = math.cosh(t0), math.exp(t0)
    return 4.0 * ch * ch + 4.0 * ch * e * c00 + 3.0 * e * e * c00 * c00


# ---------------------------------------------------------------- reference Green's function


def _check_green_args(beta: float, h: float) -> None:
    if not beta > 0.5:
        raise ValueError(f"the reference operator needs beta > 1/2, got {beta}")
    if not h > 0:
        raise ValueError(f"the reference operator needs h > 0, got {h}")


def reference_green(shape: LatticeShape, beta: float, h: float) -> SymmetricOperator:
    """``G = (-(beta - 1/2) Delta + h)^{-1}`` as a dense operator."""
    _check_green_args(beta, h)
    a = laplacian(shape, sparse=False).to_dense() * (beta - 0.5) + h * np.eye(shape.num_sites)
    g = SymmetricOperator(a).cholesky().inverse()
    return SymmetricOperator(0.5 * (g + g.T))


def green_diagonal(shape: LatticeShape, beta: float, h: float) -> float:
    """``G_00`` from the Fourier spectrum; cheap for any lattice size."""
    _check_green_args(beta, h)
    lam = laplacian_eigenvalues(shape)
    return float(np.mean(1.0 / ((beta - 0.5) * lam + h)))


# ---------------------------------------------------------------- s-moments


def s_moment_estimators(t_samples, params: ModelParams, shape: LatticeShape, site: int = 0) -> dict[int, Estimate]:
    """Estimates of ``<Dt^{-1}(0,0)^k>`` for k = 1, 2 over a stream of t-fields.

    ``Dt^{-1}`` is the s-covariance of the delta-constrained ensemble.
    """
    if params.ensemble is not Ensemble.DELTA:
        raise ValueError("s-moment estimators use the delta-constrained covariance")
    values = []
    for k, t in enumerate(t_samples):
        try:
            values.append(SFieldGaussian(t, shape, params).variance(site))
        except (FactorizationError, FieldOverflowError) as exc:
            raise FactorizationError(f"sample {k}: {exc}", getattr(exc, "site", None)) from exc
    v = np.asarray(values)
    return {1: batch_means(v), 2: batch_means(v * v)}


# ---------------------------------------------------------------- weighted Laplacian


def lemma_edge_weights(shape: LatticeShape, p: float) -> np.ndarray:
    """``(1 + |j|)^{-p}`` with j the bond endpoint nearer the origin.

    Ties go to the endpoint with the lexicographically smaller coordinates,
    which under row-major indexing is the smaller flat index.
    """
    r = shape.distance_from_origin()
    i, j = shape.edges[:, 0], shape.edges[:, 1]
    near = np.where(r[j] < r[i], j, i)
    return (1.0 + r[near]) ** (-p)


def pseudo_inverse_entry(op: SymmetricOperator, site: int = 0) -> float:
    """``A^+(site, site)`` for a connected graph Laplacian ``A``."""
    n = op.size
    g = 0 if site != 0 else 1
    p = -np.full(n, 1.0 / n)
    p[site] += 1.0
    x = op.grounded(g).cholesky().solve(np.delete(p, g))
    x = np.insert(x, g, 0.0)
    x -= x.mean()
    return float(x[site])


def weighted_laplacian_check(shape: LatticeShape, p: float) -> float:
    """Green's function at the origin of the weighted Laplacian on the zero-sum subspace."""
    if not p >= 0:
        raise ValueError(f"p must be >= 0, got {p}")
    if shape.dimension < 3 or p >= shape.dimension - 2:
        warnings.warn(
            f"d = {shape.dimension}, p = {p}: outside the regime p < d - 2 with d >= 3 where a uniform bound holds",
            stacklevel=2,
        )
    op = weighted_laplacian(shape, lemma_edge_weights(shape, p))
    return pseudo_inverse_entry(op, 0)


def weighted_laplacian_trend(dimension: int, sides, p: float) -> list[dict]:
    """``weighted_laplacian_check`` on cubic lattices of growing side."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for L in sides:
            shape = build_lattice(dimension, [L] * dimension)
            rows.append({"d": dimension, "L": L, "p": p, "green00": weighted_laplacian_check(shape, p)})
    return rows


# ---------------------------------------------------------------- regularization shift


@dataclass(frozen=True)
class ShiftReport:
    """The shift ``R_h`` computed two ways, plus the spectrum floor of ``P_t``."""

    via_projector: float
    via_determinants: float
    p_t_min_eig: float

    @property
    def discrepancy(self) -> float:
        return abs(self.via_projector - self.via_determinants)

    @property
    def agree(self) -> bool:
        scale = max(abs(self.via_projector), abs(self.via_determinants))
        return self.discrepancy <= SHIFT_RTOL * scale


def projected_mass(t) -> np.ndarray:
    """``P_t = P e^t P - P e^t P_0 e^t P / (psi_0, e^t psi_0)`` with P the zero-sum projector."""
    t = np.asarray(t, dtype=float)
    n = len(t)
    e = np.exp(t)
    proj = np.eye(n) - 1.0 / n
    pe = proj * e[None, :]  # P e^t
    mean_e = e.mean()  # (psi_0, e^t psi_0)
    v = pe.sum(axis=1) / math.sqrt(n)  # P e^t psi_0
    pt = pe @ proj - np.outer(v, v) / mean_e
    return 0.5 * (pt + pt.T)


def regularization_shift_report(t, params: ModelParams, shape: LatticeShape) -> ShiftReport:
    t = np.asarray(t, dtype=float)
    if not params.h > 0:
        raise ValueError("the regularization shift needs h > 0")
    n = shape.num_sites
    h = params.h
    dmat = build_D(t, shape, sparse=False).to_dense() * params.beta
    pt = projected_mass(t)
    basis = sla.helmert(n)  # orthonormal rows spanning the zero-sum subspace
    d_red = basis @ dmat @ basis.T
    p_red = basis @ pt @ basis.T
    mu = sla.eigh(0.5 * (p_red + p_red.T), 0.5 * (d_red + d_red.T), eigvals_only=True)
    via_projector = 0.5 * float(np.sum(np.log1p(h * mu))) + 0.5 * math.log(float(np.mean(np.exp(t))))

    delta = ModelParams(params.beta, h, Ensemble.DELTA)
    massed = ModelParams(params.beta, h, Ensemble.HMASS)
    c_h = 0.5 * SFieldGaussian(t, shape, massed).logdet
    c_tilde = 0.5 * SFieldGaussian(t, shape, delta).logdet
    via_det = c_h - c_tilde - 0.5 * math.log(h)
    return ShiftReport(via_projector, via_det, float(np.linalg.eigvalsh(pt)[0]))


def regularization_shift(t, params: ModelParams, shape: LatticeShape) -> float:
    """``R_h = C_h - C~`` without the ``ln h`` constant; both evaluations must agree."""
    rep = regularization_shift_report(t, params, shape)
    if not rep.agree:
        raise HorosimError(
            f"regularization shift mismatch: {rep.via_projector!r} vs {rep.via_determinants!r}"
        )
    return rep.via_projector


# ---------------------------------------------------------------- bound checks


def ward_check(ward: Estimate) -> BoundCheck:
    """``|h sum <sinh t> - 1|`` against zero."""
    return BoundCheck("ward", abs(ward.mean - 1.0), 0.0, ward.std_error)


def moment_checks(t0_trace, g00: float, alphas=(0.5, 1.0, 2.0)) -> list[BoundCheck]:
    t0 = np.asarray(t0_trace, dtype=float)
    out = []
    for a in alphas:
        # <exp(a (t0 - <t0>))> as a function of the two means <exp(a t0)> and <t0>
        shift = t0.mean()
        est = function_of_means(lambda m1, m0, a=a: m1 * math.exp(-a * (m0 - shift)), np.exp(a * (t0 - shift)), t0)
        out.append(BoundCheck(f"moment_alpha_{a:g}", est.mean, math.exp(0.5 * a * a * g00), est.std_error))
    return out


def tail_checks(t0_trace, g00: float, rhos=(1.0, 2.0, 3.0)) -> list[BoundCheck]:
    t0 = np.asarray(t0_trace, dtype=float)
    dev = np.abs(t0 - t0.mean())
    out = []
    for r in rhos:
        est = batch_means((dev >= r).astype(float))
        out.append(BoundCheck(f"tail_rho_{r:g}", est.mean, 2.0 * math.exp(-r * r / (2.0 * g00)), est.std_error))
    return out


def mean_checks(t0: Estimate, g00: float) -> list[BoundCheck]:
    """``-G_00/4 <= <t_0> <= 1 + G_00/4``."""
    return [
        BoundCheck("t0_lower", -0.25 * g00, t0.mean, t0.std_error),
        BoundCheck("t0_upper", t0.mean, 1.0 + 0.25 * g00, t0.std_error),
    ]


def brascamp_lieb_suite(t0_trace, g00: float, alphas=(0.5, 1.0, 2.0), rhos=(1.0, 2.0, 3.0)) -> list[BoundCheck]:
    t0 = batch_means(t0_trace)
    return moment_checks(t0_trace, g00, alphas) + tail_checks(t0_trace, g00, rhos) + mean_checks(t0, g00)


# ---------------------------------------------------------------- symmetry-breaking study


def hmass_reweight(fields, params: ModelParams, shape: LatticeShape, site: int = 0):
    """Turn delta-constrained t-samples into h-massed estimates of ``(Tr sigma_3 S_0)^2``.

    Weights are ``exp(-R_h)`` with ``R_h`` from the two log-determinants.
    Returns ``(estimate, ess_fraction)``.
    """
    delta = ModelParams(params.beta, params.h, Ensemble.DELTA)
    massed = ModelParams(params.beta, params.h, Ensemble.HMASS)
    log_w = np.empty(len(fields))
    values = np.empty(len(fields))
    for k, t in enumerate(fields):
        gm = SFieldGaussian(t, shape, massed)
        gd = SFieldGaussian(t, shape, delta)
        log_w[k] = -0.5 * (gm.logdet - gd.logdet)
        values[k] = theorem1_given_t(float(t[site]), gm.variance(site))
    w = np.exp(log_w - log_w.max())
    ess = float(w.sum() ** 2 / np.sum(w * w))
    est = function_of_means(lambda a, b: a / b, w * values, w)
    return est, ess / len(fields)


STUDY_COLUMNS = (
    "d",
    "L",
    "num_sites",
    "beta",
    "h",
    "theorem1",
    "theorem1_se",
    "theorem1_neff",
    "t0",
    "t0_se",
    "green00",
    "ward",
    "ward_se",
    "ward_ok",
    "hmass_theorem1",
    "hmass_theorem1_se",
    "hmass_ess_fraction",
)


def symmetry_breaking_study(
    dimension: int,
    sizes,
    beta: float,
    config: ChainConfig,
    num_chains: int = 1,
    reweight: bool = False,
    reweight_samples: int = 400,
    workers: int = 1,
) -> list[dict]:
    """``<(Tr sigma_3 S_0)^2>`` across lattice sizes at ``h = 1/|Lambda|``.

    With ``reweight`` the delta-constrained samples are also reweighted to
    the h-massed ensemble (on an evenly thinned subset of stored fields).
    """
    rows = []
    for L in sizes:
        shape = build_lattice(dimension, [L] * dimension)
        h = 1.0 / shape.num_sites
        params = ModelParams(beta, h, Ensemble.DELTA)
        merged, results = run_chains(
            params, shape, config, ("theorem1", "t0", "ward"), num_chains=num_chains, workers=workers, store_fields=reweight
        )
        ward = merged["ward"]
        row = {
            "d": dimension,
            "L": L,
            "num_sites": shape.num_sites,
            "beta": beta,
            "h": h,
            "theorem1": merged["theorem1"].mean,
            "theorem1_se": merged["theorem1"].std_error,
            "theorem1_neff": merged["theorem1"].n_effective,
            "t0": merged["t0"].mean,
            "t0_se": merged["t0"].std_error,
            "green00": green_diagonal(shape, beta, h),
            "ward": ward.mean,
            "ward_se": ward.std_error,
            "ward_ok": ward_check(ward).passed,
            "hmass_theorem1": float("nan"),
            "hmass_theorem1_se": float("nan"),
            "hmass_ess_fraction": float("nan"),
        }
        if reweight:
            fields = np.concatenate([r.fields for r in results])
            stride = max(1, len(fields) // reweight_samples)
            est, frac = hmass_reweight(fields[::stride], params, shape)
            row.update(hmass_theorem1=est.mean, hmass_theorem1_se=est.std_error, hmass_ess_fraction=frac)
        rows.append(row)
    return rows
