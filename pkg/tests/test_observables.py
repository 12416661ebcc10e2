import math
import warnings

import numpy as np
import pytest

from horosim.errors import FieldOverflowError
from horosim.hessian import s_covariance
from horosim.lattice import build_lattice, laplacian, laplacian_eigenvalues
from horosim.model import FieldConfig, ModelParams
from horosim.observables import (
    BoundCheck,
    brascamp_lieb_suite,
    green_diagonal,
    hmass_reweight,
    lemma_edge_weights,
    mean_checks,
    moment_checks,
    observable_theorem1,
    projected_mass,
    pseudo_inverse_entry,
    reference_green,
    regularization_shift,
    regularization_shift_report,
    s_moment_estimators,
    symmetry_breaking_study,
    tail_checks,
    theorem1_given_t,
    ward_check,
    weighted_laplacian_check,
    weighted_laplacian_trend,
)
from horosim.sampler import ChainConfig
from horosim.stats import Estimate


def cfg(t0, s0):
    return FieldConfig(np.array([t0, 0.0]), np.array([s0, -s0]))


def test_symmetry_observable_examples():
    assert observable_theorem1(cfg(0.0, 0.0)) == 4.0
    assert observable_theorem1(cfg(math.log(2), 0.0)) == pytest.approx(6.25)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert observable_theorem1(cfg(rng.normal(0, 3), rng.normal(0, 3))) >= 4.0


def test_symmetry_observable_overflow():
    with pytest.raises(FieldOverflowError):
        observable_theorem1(cfg(800.0, 0.0))


def test_s_integrated_observable_matches_gaussian_average():
    rng = np.random.default_rng(1)
    t0, c = 0.4, 0.3
    s = rng.normal(0, math.sqrt(c), 400_000)
    raw = (2 * math.cosh(t0) + s**2 * math.exp(t0)) ** 2
    assert abs(raw.mean() - theorem1_given_t(t0, c)) < 4 * raw.std() / math.sqrt(len(s))


def test_green_example():
    g = reference_green(build_lattice(1, [3]), 1.5, 1.0)
    assert g.matrix[0, 0] == pytest.approx(0.5, abs=1e-14)
    np.testing.assert_allclose(g.matrix, np.linalg.inv([[3, -1, -1], [-1, 3, -1], [-1, -1, 3]]), atol=1e-14)


def test_green_properties():
    shape = build_lattice(2, [4, 3])
    g = reference_green(shape, 2.0, 0.2).matrix
    assert np.all(g > 0)
    np.testing.assert_allclose(g.sum(axis=1), 1 / 0.2, rtol=1e-12)
    assert np.linalg.eigvalsh(g)[0] > 0
    assert green_diagonal(shape, 2.0, 0.2) == pytest.approx(g[0, 0], rel=1e-12)
    assert green_diagonal(shape, 2.0, 0.3) < green_diagonal(shape, 2.0, 0.2)
    assert green_diagonal(shape, 3.0, 0.2) < green_diagonal(shape, 2.0, 0.2)
    assert green_diagonal(shape, 2.0, 1e6) == pytest.approx(1e-6, rel=1e-4)


def test_green_rejects_bad_args():
    shape = build_lattice(1, [3])
    with pytest.raises(ValueError):
        reference_green(shape, 0.5, 1.0)
    with pytest.raises(ValueError):
        green_diagonal(shape, 2.0, 0.0)


def test_green_diagonal_finite_across_sizes():
    vals = [green_diagonal(build_lattice(3, [L] * 3), 2.0, 1.0 / L**3) for L in (4, 6, 8)]
    assert all(np.isfinite(vals))
    assert max(vals) < 2 * min(vals)


def test_s_moments_at_t_zero():
    shape = build_lattice(1, [5])
    params = ModelParams(2.0, 0.2)
    lap = laplacian(shape, sparse=False).to_dense()
    expect = np.linalg.pinv(2.0 * lap)[0, 0]
    est = s_moment_estimators([np.zeros(5)] * 4, params, shape)
    assert est[1].mean == pytest.approx(expect, rel=1e-12)
    assert est[2].mean == pytest.approx(expect**2, rel=1e-12)


def test_s_covariance_scales_under_shift():
    shape = build_lattice(2, [3, 3])
    params = ModelParams(2.0, 1 / 9)
    t = np.random.default_rng(2).normal(size=9)
    a = s_covariance(t, params, shape).matrix
    b = s_covariance(t + 0.7, params, shape).matrix
    np.testing.assert_allclose(b, math.exp(-1.4) * a, rtol=1e-10, atol=1e-14)


def test_s_moments_need_delta():
    with pytest.raises(ValueError):
        s_moment_estimators([np.zeros(3)], ModelParams(2.0, 0.2, "hmass"), build_lattice(1, [3]))


def test_pseudo_inverse_ring_value():
    for n in (3, 6, 11):
        op = laplacian(build_lattice(1, [n]), sparse=False)
        assert pseudo_inverse_entry(op, 0) == pytest.approx((n * n - 1) / (12 * n), rel=1e-12)
        assert pseudo_inverse_entry(op, 2) == pytest.approx((n * n - 1) / (12 * n), rel=1e-12)


def test_weighted_laplacian_unweighted_case():
    shape = build_lattice(3, [4, 4, 4])
    np.testing.assert_allclose(lemma_edge_weights(shape, 0.0), 1.0)
    expect = float(np.mean(np.where(laplacian_eigenvalues(shape) > 1e-12, 1 / np.maximum(laplacian_eigenvalues(shape), 1e-12), 0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert weighted_laplacian_check(shape, 0.0) == pytest.approx(expect, rel=1e-10)


def test_weighted_laplacian_trends():
    d3 = [r["green00"] for r in weighted_laplacian_trend(3, [4, 6, 8], 0.5)]
    d1 = [r["green00"] for r in weighted_laplacian_trend(1, [8, 16, 32, 64], 0.5)]
    assert max(d3) - min(d3) < 0.2 * min(d3)
    assert all(b > 1.5 * a for a, b in zip(d1, d1[1:]))


def test_weighted_laplacian_flags_hypothesis():
    with pytest.warns(UserWarning):
        weighted_laplacian_check(build_lattice(1, [6]), 0.5)
    with pytest.warns(UserWarning):
        weighted_laplacian_check(build_lattice(3, [3, 3, 3]), 1.0)
    with pytest.raises(ValueError):
        weighted_laplacian_check(build_lattice(3, [3, 3, 3]), -1.0)


def test_edge_weight_tie_rule():
    shape = build_lattice(1, [4])
    # ring 0-1-2-3-0: bond (1,2) ties at distance 1; its smaller index 1 is used
    w = lemma_edge_weights(shape, 1.0)
    for (i, j), wk in zip(shape.edges, w):
        if {int(i), int(j)} == {1, 2}:
            assert wk == pytest.approx(0.5)
        if {int(i), int(j)} == {0, 1}:
            assert wk == pytest.approx(1.0)


def test_shift_closed_form_at_t_zero():
    for L in (3, 4, 5):
        shape = build_lattice(1, [L])
        params = ModelParams(1.7, 0.3)
        lam = laplacian_eigenvalues(shape)
        lam = lam[lam > 1e-12]
        expect = 0.5 * np.sum(np.log1p(params.h / (params.beta * lam)))
        rep = regularization_shift_report(np.zeros(L), params, shape)
        assert rep.via_projector == pytest.approx(expect, rel=1e-12)
        assert rep.via_determinants == pytest.approx(expect, rel=1e-10)
        np.testing.assert_allclose(projected_mass(np.zeros(L)), np.eye(L) - 1 / L, atol=1e-15)


def test_shift_methods_agree_on_random_configs():
    rng = np.random.default_rng(3)
    for k in range(100):
        L = (3, 4, 5)[k % 3]
        shape = build_lattice(1, [L])
        params = ModelParams(rng.uniform(0.5, 4), rng.uniform(0.01, 2))
        t = rng.normal(0, 1.5, L)
        rep = regularization_shift_report(t, params, shape)
        assert rep.agree, rep
        assert rep.p_t_min_eig >= -1e-10
        assert regularization_shift(t, params, shape) == rep.via_projector


def test_projected_mass_annihilates_constants():
    t = np.random.default_rng(4).normal(size=6)
    pt = projected_mass(t)
    np.testing.assert_allclose(pt @ np.ones(6), 0, atol=1e-12)
    # and e^t psi_0 direction after projection
    v = (np.eye(6) - 1 / 6) @ np.exp(t)
    np.testing.assert_allclose(pt @ np.ones(6), 0, atol=1e-12)
    assert np.linalg.eigvalsh(pt)[0] > -1e-10
    assert np.allclose(pt, pt.T)
    assert np.dot(v, pt @ v) >= -1e-10


def test_bound_check_logic():
    b = BoundCheck("x", 1.2, 1.0, 0.1)
    assert b.slack == pytest.approx(-0.2) and b.passed
    assert not BoundCheck("x", 1.4, 1.0, 0.1).passed
    assert BoundCheck("x", 0.5, 1.0, 0.0).passed
    d = b.as_dict()
    assert d["passed"] is True and d["name"] == "x"
    assert ward_check(Estimate(1.05, 0.02, 100, 100)).passed
    assert not ward_check(Estimate(1.1, 0.02, 100, 100)).passed


def test_bl_checks_on_gaussian_series():
    rng = np.random.default_rng(5)
    g = 0.4
    t0 = 0.3 + math.sqrt(g) * rng.standard_normal(100_000)
    checks = brascamp_lieb_suite(t0, g)
    assert [c.name for c in checks] == [
        "moment_alpha_0.5",
        "moment_alpha_1",
        "moment_alpha_2",
        "tail_rho_1",
        "tail_rho_2",
        "tail_rho_3",
        "t0_lower",
        "t0_upper",
    ]
    assert all(c.passed for c in checks)
    # a wider distribution violates the moment and tail bounds
    wide = 3 * math.sqrt(g) * rng.standard_normal(100_000)
    assert not all(c.passed for c in moment_checks(wide, g))
    assert not all(c.passed for c in tail_checks(wide, g))
    assert not mean_checks(Estimate(2.0, 0.01, 1e4, 1e4), g)[1].passed


def test_hmass_reweight_identity_limit():
    shape = build_lattice(1, [4])
    params = ModelParams(2.0, 0.25)
    fields = [np.zeros(4)] * 10
    est, frac = hmass_reweight(fields, params, shape)
    c = s_covariance(np.zeros(4), ModelParams(2.0, 0.25, "hmass"), shape).matrix[0, 0]
    assert est.mean == pytest.approx(theorem1_given_t(0.0, c))
    assert frac == pytest.approx(1.0)


def test_symmetry_breaking_study_rows():
    cfg_ = ChainConfig(num_sweeps=600, burn_in=100, seed=1)
    rows = symmetry_breaking_study(1, [4, 6], 2.0, cfg_, reweight=True, reweight_samples=50)
    assert [r["L"] for r in rows] == [4, 6]
    for r in rows:
        assert r["h"] == pytest.approx(1 / r["num_sites"])
        assert r["theorem1"] >= 4
        assert 0 < r["hmass_ess_fraction"] <= 1
        assert np.isfinite(r["hmass_theorem1"])
