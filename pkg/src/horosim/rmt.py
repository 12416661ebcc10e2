"""Gaussian band random matrices and the determinant push-forward.

Conventions
-----------
H acts on ``N * |Lambda|`` orbitals; orbital ``a`` lives on site ``a // N``.
Entries are independent up to Hermiticity, centred, with

    E|H_ab|^2 = J[site(a), site(b)],

which is the covariance fixed by the characteristic function
``exp(-1/2 sum_ij J_ij Tr(Pi_i K Pi_j K))``.  Diagonal entries are real
with variance J, off-diagonal entries have real and imaginary parts of
variance J/2 each.  (A GUE weight ``exp(-Tr R^2)`` instead gives
``E|R_ab|^2 = 1/2``; multiply J by 1/2 to convert.)

Push-forward measures use ``d phi d phi-bar = prod dRe dIm`` and the
Lebesgue measure ``dM = prod_k dM_kk prod_{k<l} dRe M_kl dIm M_kl``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import EffectiveSampleSizeError
from .lattice import LatticeShape, laplacian
from .stats import Estimate, batch_means, importance_ratio

MIN_ESS_FRACTION = 0.01


class ProfileKind(str, enum.Enum):
    EXPONENTIAL_W = "exponential_w"
    CUBES = "cubes"
    CUSTOM = "custom"


@dataclass(frozen=True)
class VarianceProfile:
    matrix: np.ndarray
    kind: ProfileKind
    min_eigenvalue: float

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -1e-12 * max(1.0, float(np.abs(self.matrix).max()))


def _profile(matrix, kind) -> VarianceProfile:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"variance profile must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("variance profile must be symmetric")
    if np.any(m < 0):
        raise ValueError("variance profile must be entrywise non-negative")
    m = 0.5 * (m + m.T)
    return VarianceProfile(m, ProfileKind(kind), float(np.linalg.eigvalsh(m)[0]))


def build_J(kind, shape: LatticeShape, W: float | None = None, J0: float | None = None, J1: float = 0.0, cube_side: int | None = None, matrix=None) -> VarianceProfile:
    """Variance profile J.

    ``exponential_w``: ``(-W^2 Delta + 1)^{-1}``.
    ``cubes``: J0 inside a cube of side ``cube_side``, J1 between
    nearest-neighbour cubes (periodic), zero otherwise.
    ``custom``: the given ``matrix``.
    """
    kind = ProfileKind(kind)
    n = shape.num_sites
    if kind is ProfileKind.EXPONENTIAL_W:
        if W is None or not W >= 0:
            raise ValueError(f"exponential profile needs W >= 0, got {W}")
        a = W * W * laplacian(shape, sparse=False).to_dense() + np.eye(n)
        return _profile(np.linalg.inv(a), kind)
    if kind is ProfileKind.CUBES:
        if J0 is None or not J0 > 0 or not J1 >= 0:
            raise ValueError(f"cube profile needs J0 > 0 and J1 >= 0, got {J0}, {J1}")
        if cube_side is None or cube_side < 1 or any(L % cube_side for L in shape.side_lengths):
            raise ValueError(f"cube side {cube_side} must divide every side of {shape.side_lengths}")
        cube_coords = shape.all_coordinates // cube_side
        cube_sides = [L // cube_side for L in shape.side_lengths]
        cube_id = np.ravel_multi_index(cube_coords.T, cube_sides)
        m = np.where(cube_id[:, None] == cube_id[None, :], J0, 0.0)
        if J1 > 0:
            sides = np.asarray(cube_sides)
            diff = np.abs(cube_coords[:, None, :] - cube_coords[None, :, :])
            diff = np.minimum(diff, sides - diff)  # periodic distance per axis
            adjacent = diff.sum(axis=-1) == 1
            m = m + J1 * adjacent
        return _profile(m, kind)
    if matrix is None:
        raise ValueError("custom profile needs a matrix")
    m = np.asarray(matrix, dtype=float)
    if m.shape != (n, n):
        raise ValueError(f"custom profile must be {n}x{n}, got {m.shape}")
    return _profile(m, kind)


@dataclass(frozen=True)
class BandEnsembleSpec:
    shape: LatticeShape
    N: int
    profile: VarianceProfile

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.profile.matrix.shape != (self.shape.num_sites,) * 2:
            raise ValueError("variance profile does not match the lattice")

    @property
    def size(self) -> int:
        return self.N * self.shape.num_sites

    @property
    def orbital_variance(self) -> np.ndarray:
        """``E|H_ab|^2`` for every orbital pair."""
        site = np.arange(self.size) // self.N
        return self.profile.matrix[site[:, None], site[None, :]]


def sample_H(spec: BandEnsembleSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw Hermitian matrices with ``E|H_ab|^2 = J[site(a), site(b)]``."""
    n = spec.size
    shape = (n, n) if size is None else (size, n, n)
    var = spec.orbital_variance
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(var / 2.0)
    upper = np.triu(z, 1)
    diag = rng.standard_normal(shape[:-1]) * np.sqrt(np.diagonal(var))
    h = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(n)
    h[..., idx, idx] = diag
    return h


@dataclass(frozen=True)
class ResolventStat:
    energy: float
    epsilon: float
    x: int
    y: int
    value: Estimate


def resolvent_stats(spec: BandEnsembleSpec, E: float, epsilon: float, x: int = 0, y: int | None = None, mc_draws: int = 1000, rng=None):
    """Estimates of ``pi^-1 Im <G(x,x)>`` and ``<|G(x,y)|^2>`` with ``G = (H - E - i eps)^{-1}``.

    Every draw is checked against ``|G(., x)| <= 1/eps``.
    Returns ``(density, squared)`` as ``ResolventStat`` records.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    rng = rng if rng is not None else np.random.default_rng()
    y = x if y is None else y
    n = spec.size
    dens = np.empty(mc_draws)
    sq = np.empty(mc_draws)
    e_x = np.zeros(n, dtype=complex)
    e_x[x] = 1.0
    for k in range(mc_draws):
        h = sample_H(spec, rng)
        a = h - (E + 1j * epsilon) * np.eye(n)
        col = np.linalg.solve(a, e_x)
        norm = float(np.linalg.norm(col))
        if not norm <= (1.0 + 1e-8) / epsilon:
            raise np.linalg.LinAlgError(
                f"draw {k}: |G e_x| = {norm:.6g} exceeds 1/eps; condition number {np.linalg.cond(a):.3g}"
            )
        dens[k] = col[x].imag / math.pi
        sq[k] = abs(col[y]) ** 2  # G symmetric in distribution; G(y,x) via the same column
    return (
        ResolventStat(E, epsilon, x, x, batch_means(dens)),
        ResolventStat(E, epsilon, x, y, batch_means(sq)),
    )


def deformed_average_B1(spec: BandEnsembleSpec, E: float, epsilon: float, site: int = 0, mc_draws: int = 2000, rng=None, batch: int = 200):
    """``<|Tr G Pi_l|^2 |Det|^-2> / <|Det|^-2>`` with ``G = (H - E + i eps)^{-1}``.

    Ratio importance sampling over the undeformed ensemble.  Returns
    ``(estimate, ess)``; raises when the Kish effective sample size of the
    determinant weights drops below 1% of the draws.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    rng = rng if rng is not None else np.random.default_rng()
    orb = np.arange(site * spec.N, (site + 1) * spec.N)
    values, log_w = [], []
    left = mc_draws
    while left > 0:
        m = min(batch, left)
        lam, vec = np.linalg.eigh(sample_H(spec, rng, m))
        z = lam - E + 1j * epsilon
        weight = np.sum(np.abs(vec[:, orb, :]) ** 2, axis=1)  # (m, n)
        tr = np.sum(weight / z, axis=1)
        values.append(np.abs(tr) ** 2)
        log_w.append(-np.sum(np.log(np.abs(z) ** 2), axis=1))
        left -= m
    est, ess = importance_ratio(np.concatenate(values), np.concatenate(log_w))
    if ess < MIN_ESS_FRACTION * mc_draws:
        raise EffectiveSampleSizeError(
            f"effective sample size {ess:.1f} of {mc_draws} draws is below 1%; increase epsilon"
        )
    return est, ess


def saddle_params(N: int, J0: float, J1: float, E: float, epsilon: float) -> tuple[float, float, float]:
    """Mean-field density ``rho_N(E)`` and the sigma-model couplings ``(beta, h)``."""
    if not J0 > 0:
        raise ValueError(f"J0 must be > 0, got {J0}")
    gap = 4.0 * N * J0 - E * E
    if gap < 0:
        raise ValueError(f"E = {E} lies outside the band |E| <= {math.sqrt(4 * N * J0):.6g}")
    rho = math.sqrt(gap) / (2.0 * J0)
    return rho, 2.0 * J1 * rho * rho, 2.0 * epsilon * rho


# ---------------------------------------------------------------- push-forward


def singular_value_jacobian(u, N: int) -> np.ndarray:
    """``J(sqrt(lambda))`` at singular values ``u`` (last axis of length n)."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    out = np.prod(u ** (1 + 2 * (N - n)), axis=-1)
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (u[..., i] - u[..., j]) ** 2 * (u[..., i] + u[..., j]) ** 2
    return out


def default_test_functions(n: int):
    """Three positive, integrable, unitarily invariant test functions of the eigenvalues."""
    if n == 1:
        return {
            "exp": lambda lam: np.exp(-lam[..., 0]),
            "lin_exp": lambda lam: lam[..., 0] * np.exp(-lam[..., 0]),
            "quad_exp": lambda lam: lam[..., 0] ** 2 * np.exp(-lam[..., 0]),
        }
    return {
        "exp_tr": lambda lam: np.exp(-lam.sum(-1)),
        "tr_exp_tr": lambda lam: lam.sum(-1) * np.exp(-lam.sum(-1)),
        "det_exp_tr": lambda lam: lam.prod(-1) * np.exp(-lam.sum(-1)),
    }


def _tail_ok(F, n: int, N: int) -> bool:
    radii = np.array([25.0, 50.0, 100.0, 200.0])
    lam = np.repeat(radii[:, None], n, axis=1)
    mass = F(lam) * radii ** (n * N + 1)
    return bool(np.all(np.isfinite(mass)) and np.all(np.diff(mass) <= 0) and mass[-1] < 1e-12)


def eigenvalue_integral(F, n: int, N: int) -> float:
    """``2^n int F(lambda) J(sqrt(lambda)) prod d sqrt(lambda_k)`` over the positive orthant."""
    if n == 1:
        val, _ = integrate.quad(lambda u: 2.0 * F(np.array([[u * u]]))[0] * u ** (2 * N - 1), 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
        return val
    if n == 2:

        def inner(u1, u2):
            lam = np.array([[u1 * u1, u2 * u2]])
            return 4.0 * F(lam)[0] * singular_value_jacobian(np.array([u1, u2]), N)

        val, _ = integrate.nquad(inner, [[0, np.inf], [0, np.inf]], opts={"epsabs": 0, "epsrel": 1e-10, "limit": 200})
        return val
    raise ValueError(f"n must be 1 or 2, got {n}")


def lebesgue_integral_2x2(F, N: int) -> float:
    """``int F(M) Det^{N-2}(M) dM`` over positive 2x2 Hermitian M = [[a, z], [z*, d]].

    For invariant F the phase of z integrates to ``2 pi |z|``; the
    eigenvalues are recovered from (a, d, |z|).
    """

    def integrand(r, a, d):
        det = a * d - r * r
        if det <= 0:
            return 0.0
        half, disc = 0.5 * (a + d), math.sqrt(0.25 * (a - d) ** 2 + r * r)
        lam = np.array([[half - disc, half + disc]])
        return 2.0 * math.pi * r * F(lam)[0] * det ** (N - 2)

    val, _ = integrate.nquad(
        integrand,
        [lambda a, d: [0.0, math.sqrt(a * d)], [0, np.inf], [0, np.inf]],
        opts={"epsabs": 0, "epsrel": 1e-8, "limit": 100},
    )
    return val


@dataclass(frozen=True)
class PushforwardRow:
    name: str
    lhs: Estimate
    rhs: float
    ratio: Estimate
    lebesgue: float = float("nan")


def pushforward_check(n: int, N: int, test_functions=None, mc_draws: int = 200_000, rng=None, lebesgue: bool = False):
    """Compare ``int F(phi* phi) d phi`` with ``int F(M) Det^{N-n}(M) dM`` for several F.

    The left side is a Monte-Carlo average over complex normal phi, the
    right side an eigenvalue quadrature.  Returns ``(rows, diffs)`` where
    ``diffs`` holds, for each F after the first, the ratio difference to
    the first F with its standard error (same draws, so correlations are
    accounted for).
    """
    if n not in (1, 2) or N < n:
        raise ValueError(f"need n in {{1, 2}} and N >= n, got n={n}, N={N}")
    rng = rng if rng is not None else np.random.default_rng()
    funcs = dict(test_functions or default_test_functions(n))
    for name, F in funcs.items():
        if not _tail_ok(F, n, N):
            raise ValueError(f"test function {name!r} does not decay fast enough to be integrable")

    # phi in C^{N x n} with density pi^{-nN} exp(-|phi|^2)
    phi = (rng.standard_normal((mc_draws, N, n)) + 1j * rng.standard_normal((mc_draws, N, n))) / math.sqrt(2.0)
    M = np.conj(np.swapaxes(phi, 1, 2)) @ phi
    lam = np.clip(np.linalg.eigvalsh(M), 0.0, None)
    log_norm = n * N * math.log(math.pi)
    trace = lam.sum(axis=1)

    rows, series = [], {}
    for name, F in funcs.items():
        g = F(lam) * np.exp(trace) * math.exp(log_norm)
        rhs = eigenvalue_integral(F, n, N)
        lhs = batch_means(g)
        series[name] = g / rhs
        leb = lebesgue_integral_2x2(F, N) if (lebesgue and n == 2) else float("nan")
        rows.append(PushforwardRow(name, lhs, rhs, batch_means(g / rhs), leb))
    names = list(funcs)
    diffs = {k: batch_means(series[k] - series[names[0]]) for k in names[1:]}
    return rows, diffs


def expected_ratio_n1(N: int) -> float:
    """The constant for n = 1: ``pi^N / Gamma(N)``."""
    return math.exp(N * math.log(math.pi) - special.gammaln(N))
