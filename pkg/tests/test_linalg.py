import numpy as np
import pytest
from scipy import sparse as sp

from horosim.errors import FactorizationError
from horosim.linalg import SymmetricOperator


def _spd(n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


@pytest.mark.parametrize("sparse", [False, True])
def test_logdet_and_solve(sparse):
    a = _spd(12)
    op = SymmetricOperator(sp.csr_matrix(a) if sparse else a)
    f = op.cholesky()
    assert f.logdet == pytest.approx(np.linalg.slogdet(a)[1], rel=1e-12)
    b = np.arange(12.0)
    np.testing.assert_allclose(f.solve(b), np.linalg.solve(a, b), rtol=1e-10)


@pytest.mark.parametrize("sparse", [False, True])
def test_sample_covariance(sparse):
    a = _spd(4, 3)
    op = SymmetricOperator(sp.csr_matrix(a) if sparse else a)
    x = op.cholesky().sample(np.random.default_rng(0), size=200_000)
    cov = np.cov(x.T)
    target = np.linalg.inv(a)
    se = np.sqrt((target**2 + np.outer(np.diag(target), np.diag(target))) / len(x))
    assert np.all(np.abs(cov - target) < 5 * se)


def test_not_positive_definite_reports_site():
    a = np.diag([1.0, 2.0, -1.0])
    with pytest.raises(FactorizationError) as exc:
        SymmetricOperator(a).cholesky()
    assert exc.value.site == 2


def test_grounded_drops_row_and_column():
    a = _spd(5)
    g = SymmetricOperator(a).grounded(2).to_dense()
    np.testing.assert_array_equal(g, np.delete(np.delete(a, 2, 0), 2, 1))
