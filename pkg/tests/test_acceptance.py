"""Acceptance criteria 1-10.

Each test records one ``criterion N: PASS|FAIL ...`` line; the lines are
printed in the pytest terminal summary, or directly when this file is run
as a script.
"""

import functools
import math
import sys

import numpy as np
import pytest

from horosim.cli import main as cli_main
from horosim.hessian import hessian_effective
from horosim.lattice import build_lattice
from horosim.model import ModelParams, effective_action
from horosim.observables import (
    brascamp_lieb_suite,
    green_diagonal,
    regularization_shift_report,
    symmetry_breaking_study,
)
from horosim.rmt import (
    BandEnsembleSpec,
    build_J,
    deformed_average_B1,
    expected_ratio_n1,
    pushforward_check,
    saddle_params,
    sample_H,
)
from horosim.sampler import ChainConfig, run_chains
from oracles import ring3_quadrature

REPORT = []
SWEEPS = 20000
BURN = 2000


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)
    return passed


@functools.lru_cache(maxsize=None)
def delta_chain(d, L, beta=2.0, seed=1, store_fields=False):
    shape = build_lattice(d, [L] * d)
    params = ModelParams(beta, 1.0 / shape.num_sites)
    cfg = ChainConfig(num_sweeps=SWEEPS, burn_in=BURN, seed=seed)
    merged, results = run_chains(params, shape, cfg, ("t0", "ward", "theorem1"), store_fields=store_fields)
    return shape, params, merged, results


# ---------------------------------------------------------------- 1


@pytest.mark.parametrize("d,L", [(1, 16), (2, 6), (3, 4)])
def test_criterion_1_ward_identity(d, L):
    _, _, merged, _ = delta_chain(d, L)
    w = merged["ward"]
    ok = abs(w.mean - 1.0) <= 3 * w.std_error and w.n_effective >= 500
    record(1, ok, f"d={d} L={L}: h*sum<sinh t> = {w.mean:.4f} +/- {w.std_error:.4f}, n_eff = {w.n_effective:.0f}")
    assert ok


# ---------------------------------------------------------------- 2


@pytest.mark.parametrize("beta", [1.5, 2.0, 4.0])
def test_criterion_2_convexity_certificate(beta):
    shape = build_lattice(3, [4, 4, 4])
    params = ModelParams(beta, 1 / 64)
    cfg = ChainConfig(num_sweeps=5000, burn_in=1000, seed=2)
    _, results = run_chains(params, shape, cfg, ("t0",), store_fields=True)
    fields = results[0].fields
    idx = np.linspace(0, len(fields) - 1, 100).round().astype(int)
    lam_min, bond_max, row_rel = np.inf, -np.inf, 0.0
    for i in idx:
        rep = hessian_effective(fields[i], params, shape)
        lam_min = min(lam_min, rep.lambda_min)
        bond_max = max(bond_max, float(rep.bond_fluct.max()))
        target = 2.0 * rep.mean_u
        row_rel = max(row_rel, float(np.max(np.abs(rep.K.sum(axis=1) - target) / np.abs(target))))
    ok = lam_min >= -1e-8 and bond_max <= 0.5 + 1e-10 and row_rel <= 1e-10
    record(
        2,
        ok,
        f"beta={beta:g}, 100 configs: min lambda = {lam_min:.4g}, max bond term = {bond_max:.6f}, "
        f"row-sum rel. residual = {row_rel:.2e}",
    )
    assert ok


# ---------------------------------------------------------------- 3


def hessian_fd(f, t, step=1e-4):
    n = len(t)
    out = np.empty((n, n))
    f0 = f(t)
    eye = np.eye(n) * step
    for i in range(n):
        out[i, i] = (f(t + eye[i]) - 2 * f0 + f(t - eye[i])) / step**2
        for j in range(i):
            v = f(t + eye[i] + eye[j]) - f(t + eye[i] - eye[j]) - f(t - eye[i] + eye[j]) + f(t - eye[i] - eye[j])
            out[i, j] = out[j, i] = v / (4 * step**2)
    return out


def test_criterion_3_hessian_finite_differences():
    rng = np.random.default_rng(3)
    cases = [[4], [8], [16], [3, 3], [4, 4]]
    worst = 0.0
    for k in range(20):
        sides = cases[k % len(cases)]
        shape = build_lattice(len(sides), sides)
        params = ModelParams(rng.uniform(1.0, 3.0), rng.uniform(0.05, 1.0), ("delta", "hmass")[k % 2])
        t = rng.normal(scale=0.7, size=shape.num_sites)
        e2 = hessian_effective(t, params, shape).e2
        fd = hessian_fd(lambda x: effective_action(x, params, shape), t)
        worst = max(worst, float(np.abs(e2 - fd).max() / np.abs(e2).max()))
    ok = worst <= 1e-5
    record(3, ok, f"20 configs, d in {{1,2}}, |Lambda| <= 16: max relative deviation = {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_brascamp_lieb():
    shape, params, merged, results = delta_chain(3, 4)
    g00 = green_diagonal(shape, params.beta, params.h)
    checks = brascamp_lieb_suite(results[0].traces["t0"], g00, alphas=(0.5, 1.0, 2.0), rhos=(1.0, 2.0))
    ok = all(c.passed for c in checks)
    detail = ", ".join(f"{c.name} {c.lhs:.4g}<={c.rhs:.4g}" for c in checks)
    record(4, ok, f"d=3 L=4 beta=2 h=1/64, G00 = {g00:.4f}: {detail}")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_finite_size_stability():
    cfg = ChainConfig(num_sweeps=SWEEPS, burn_in=BURN, seed=5)
    d3 = symmetry_breaking_study(3, [4, 6], 2.0, cfg, num_chains=2)
    d1 = symmetry_breaking_study(1, [8, 16, 32], 2.0, cfg, num_chains=2)
    a, b = d3
    diff = abs(a["theorem1"] - b["theorem1"])
    comb = math.hypot(a["theorem1_se"], b["theorem1_se"])
    flat = diff <= 3 * comb
    growth = [r["theorem1"] for r in d1]
    mono = all(x < y for x, y in zip(growth, growth[1:]))
    ward_ok = all(r["ward_ok"] for r in d3 + d1)
    ok = flat and mono and ward_ok
    record(
        5,
        ok,
        f"d=3: L=4 {a['theorem1']:.3f}+/-{a['theorem1_se']:.3f}, L=6 {b['theorem1']:.3f}+/-{b['theorem1_se']:.3f} "
        f"({diff / comb:.2f} combined sigma); d=1 L=8,16,32: " + ", ".join(f"{g:.2f}" for g in growth),
    )
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_quadrature_oracle():
    quad = ring3_quadrature(2.0, 1 / 3)
    shape = build_lattice(1, [3])
    cfg = ChainConfig(num_sweeps=100_000, burn_in=BURN, seed=6)
    merged, _ = run_chains(ModelParams(2.0, 1 / 3), shape, cfg, ("sinh_t0", "theorem1"))
    parts, ok = [], True
    for key in ("sinh_t0", "theorem1"):
        est = merged[key]
        dev = abs(est.mean - quad[key]) / est.std_error
        ok &= dev <= 3
        parts.append(f"{key} {est.mean:.5f}+/-{est.std_error:.5f} vs {quad[key]:.6f} ({dev:.2f} sigma)")
    record(6, ok, "d=1 L=3 beta=2 h=1/3: " + "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_regularization_shift():
    rng = np.random.default_rng(7)
    worst_rel, worst_eig = 0.0, np.inf
    for k in range(100):
        L = (3, 4, 5)[k % 3]
        shape = build_lattice(1, [L])
        params = ModelParams(rng.uniform(0.5, 4.0), rng.uniform(0.01, 2.0))
        rep = regularization_shift_report(rng.normal(scale=1.5, size=L), params, shape)
        scale = max(abs(rep.via_projector), abs(rep.via_determinants))
        worst_rel = max(worst_rel, rep.discrepancy / scale)
        worst_eig = min(worst_eig, rep.p_t_min_eig)
    ok = worst_rel <= 1e-9 and worst_eig >= -1e-10
    record(7, ok, f"100 configs, L in {{3,4,5}}: max relative gap = {worst_rel:.2e}, min eig P_t = {worst_eig:.2e}")
    assert ok


# ---------------------------------------------------------------- 8


@pytest.mark.parametrize("n,N", [(1, 1), (1, 3), (2, 2)])
def test_criterion_8_pushforward(n, N):
    rows, diffs = pushforward_check(n, N, mc_draws=200_000, rng=np.random.default_rng(8))
    ref = rows[0].ratio.mean
    ok = all(abs(d.mean) <= 5 * d.std_error + 1e-12 * ref for d in diffs.values())
    if (n, N) == (1, 1):
        ok &= all(abs(r.ratio.mean - math.pi) <= 5 * r.ratio.std_error + 1e-12 for r in rows)
    ratios = ", ".join(f"{r.name} {r.ratio.mean:.4f}+/-{r.ratio.std_error:.4f}" for r in rows)
    extra = f" (expected {expected_ratio_n1(N):.4f})" if n == 1 else ""
    record(8, ok, f"(n,N)=({n},{N}): {ratios}{extra}")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_9_rmt():
    from scipy import integrate

    with np.testing.suppress_warnings() as sup:
        sup.filter(UserWarning)
        shape = build_lattice(1, [2])
    prof = build_J("custom", shape, matrix=[[1.0, 0.4], [0.4, 0.6]])
    spec = BandEnsembleSpec(shape, 2, prof)
    h = sample_H(spec, np.random.default_rng(9), size=10_000)
    var = spec.orbital_variance
    diag = np.eye(spec.size, dtype=bool)
    sd = np.where(diag, math.sqrt(2) * var, var) / math.sqrt(len(h))
    cov_dev = float(np.max(np.abs((np.abs(h) ** 2).mean(axis=0) - var) / sd))
    mean_dev = float(np.max(np.abs(h.mean(axis=0)) / np.sqrt(var / len(h))))
    cov_ok = cov_dev <= 5 and mean_dev <= 5

    single = BandEnsembleSpec(shape, 1, build_J("custom", shape, matrix=np.eye(2)))
    E, eps = 0.2, 0.5
    est, _ = deformed_average_B1(single, E, eps, mc_draws=40_000, rng=np.random.default_rng(10))
    w = lambda x: math.exp(-0.5 * x * x)
    num = integrate.quad(lambda x: w(x) / ((x - E) ** 2 + eps**2) ** 2, -np.inf, np.inf)[0]
    den = integrate.quad(lambda x: w(x) / ((x - E) ** 2 + eps**2), -np.inf, np.inf)[0]
    b1_dev = abs(est.mean - num / den) / est.std_error
    b1_ok = b1_dev <= 3

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        N, J0 = int(rng.integers(1, 10)), rng.uniform(0.1, 3.0)
        E = rng.uniform(-1, 1) * math.sqrt(4 * N * J0)
        rho, _, _ = saddle_params(N, J0, 1.0, E, 0.1)
        worst = max(worst, abs(4 * J0**2 * rho**2 + E**2 - 4 * N * J0) / (4 * N * J0))
    saddle_ok = worst <= 1e-14
    ok = cov_ok and b1_ok and saddle_ok
    record(
        9,
        ok,
        f"covariance max dev {cov_dev:.2f} sigma, mean max dev {mean_dev:.2f} sigma; "
        f"B1 {est.mean:.5f}+/-{est.std_error:.5f} vs {num / den:.5f} ({b1_dev:.2f} sigma); "
        f"saddle self-consistency rel. error {worst:.1e}",
    )
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_reproducibility(tmp_path):
    text = (
        'd = 1\nsides = [16]\nbeta = 2.0\nh_rule = "inverse_volume"\nseed = 10\n'
        f"[chain]\nnum_sweeps = {SWEEPS}\nburn_in = {BURN}\n"
    )
    cfg = tmp_path / "ward.toml"
    cfg.write_text(text)
    codes = [cli_main(["ward", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = (tmp_path / "a" / "ward.csv").read_bytes() == (tmp_path / "b" / "ward.csv").read_bytes()
    pf = tmp_path / "pf.toml"
    pf.write_text(text + "[pushforward]\nn = 2\nN = 2\nmc_draws = 50000\n")
    for d in ("c", "e"):
        codes.append(cli_main(["pushforward", "--config", str(pf), "--out", str(tmp_path / d)]))
    same &= (tmp_path / "c" / "pushforward.csv").read_bytes() == (tmp_path / "e" / "pushforward.csv").read_bytes()
    ok = same and codes == [0, 0, 0, 0]
    record(10, ok, f"ward (d=1 L=16) and pushforward (2,2) CSVs byte-identical across repeats: {same}, exit codes {codes}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
