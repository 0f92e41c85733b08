import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrdtest.covariance import (
    ActiveSet,
    CovarianceModel,
    cholesky_factor,
    intraclass_inverse,
    principal_submatrix_solve,
    read_matrix_csv,
    submatrix_precision,
    succ_det,
    succ_inverse_first_row,
    tridiag_inverse_boundary_rows,
    write_matrix_csv,
)
from mrdtest.exceptions import FactorizationError, ParameterDomainError


def test_intraclass_inverse_small_by_hand():
    # rho = 1/2, p = 2: [[1, .5], [.5, 1]]^-1 = (4/3) [[1, -.5], [-.5, 1]]
    expected = np.array([[4 / 3, -2 / 3], [-2 / 3, 4 / 3]])
    assert np.allclose(intraclass_inverse(0.5, 2), expected, atol=1e-15)


@pytest.mark.parametrize("p", [1, 2, 3, 7, 20])
@pytest.mark.parametrize("rho", [-0.04, 0.0, 0.3, 0.5, 0.9])
def test_intraclass_inverse_matches_dense(p, rho):
    S = CovarianceModel.intraclass(p, rho).to_dense()
    assert np.allclose(intraclass_inverse(rho, p), np.linalg.inv(S), atol=1e-10)


def test_intraclass_rejects_singular_rho():
    with pytest.raises(ParameterDomainError):
        CovarianceModel.intraclass(5, -0.25)
    with pytest.raises(ParameterDomainError):
        intraclass_inverse(1.0, 3)


@pytest.mark.parametrize("p", range(1, 21))
def test_boundary_rows_match_dense(p):
    inv = np.linalg.inv(CovarianceModel.changepoint(p).to_dense())
    first, last = tridiag_inverse_boundary_rows(p)
    assert np.allclose(first, inv[0], atol=1e-10)
    assert np.allclose(last, inv[-1], atol=1e-10)


def test_boundary_rows_hand_value():
    # p = 3: inverse of [[2,-1,0],[-1,2,-1],[0,-1,2]] has first row (3, 2, 1)/4
    first, last = tridiag_inverse_boundary_rows(3)
    assert np.allclose(first, [0.75, 0.5, 0.25])
    assert np.allclose(last, [0.25, 0.5, 0.75])


@pytest.mark.parametrize("r", range(1, 21))
@pytest.mark.parametrize("rho", [-0.45, -0.1, 0.2, 0.45])
def test_successive_recursions_match_dense(r, rho):
    S = CovarianceModel.successive(r, rho).to_dense()
    assert abs(succ_det(r, rho) - np.linalg.det(S)) < 1e-10
    assert np.allclose(succ_inverse_first_row(r, rho), np.linalg.inv(S)[0], atol=1e-10)


def test_succ_det_hand_values():
    assert succ_det(0, 0.3) == 1.0
    assert succ_det(1, 0.3) == 1.0
    assert succ_det(2, 0.3) == pytest.approx(1 - 0.09)
    assert succ_det(3, 0.3) == pytest.approx(1 - 2 * 0.09)


def test_successive_not_pd_rejected():
    # the infinite successive matrix stays PD only for |rho| < 1/2
    with pytest.raises(ParameterDomainError):
        CovarianceModel.successive(50, 0.6)


def test_dense_model_checks():
    with pytest.raises(ParameterDomainError):
        CovarianceModel.dense([[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(FactorizationError):
        CovarianceModel.dense([[1.0, 2.0], [2.0, 1.0]])


def test_model_equality_and_hash():
    a = CovarianceModel.intraclass(4, 0.5, 2.0)
    b = CovarianceModel.intraclass(4, 0.5, 2.0)
    assert a == b and hash(a) == hash(b)
    assert a != CovarianceModel.intraclass(4, 0.5, 1.0)
    m = np.eye(3)
    assert CovarianceModel.dense(m) == CovarianceModel.dense(m.copy())


def test_column_and_diagonal_agree_with_dense():
    for model in (
        CovarianceModel.intraclass(5, 0.3, 2.0),
        CovarianceModel.changepoint(5, 0.5),
        CovarianceModel.successive(5, -0.3, 1.5),
        CovarianceModel.dense(np.diag([1.0, 2.0, 3.0]) + 0.1, 2.0),
    ):
        D = model.to_dense()
        assert np.allclose(model.diagonal(), np.diag(D))
        for j in range(model.size):
            assert np.allclose(model.column(j), D[:, j])


def test_active_set_keeps_rejection_order():
    a = ActiveSet.full(5).reject(3).reject(0)
    assert a.rejected == (3, 0)
    assert a.remaining == (1, 2, 4)
    assert a.stage == 3
    assert ActiveSet.from_rejected(5, [3, 0]) == a
    with pytest.raises(ValueError):
        a.reject(3)


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(["intraclass", "changepoint", "successive"]),
    M=st.integers(1, 25),
    seed=st.integers(0, 2**31 - 1),
)
def test_submatrix_precision_matches_inverse(kind, M, seed):
    rng = np.random.default_rng(seed)
    if kind == "intraclass":
        model = CovarianceModel.intraclass(M, float(rng.uniform(0, 0.9)), 1.3)
    elif kind == "changepoint":
        model = CovarianceModel.changepoint(M, 0.7)
    else:
        model = CovarianceModel.successive(M, float(rng.uniform(-0.45, 0.45)), 2.0)
    k = int(rng.integers(0, M))
    active = ActiveSet.from_rejected(M, rng.permutation(M)[:k])
    idx = active.indices()
    v = rng.standard_normal(idx.size)
    P = np.linalg.inv(model.to_dense()[np.ix_(idx, idx)])
    pv, diag = submatrix_precision(model, active, v)
    assert np.allclose(pv, P @ v, atol=1e-10)
    assert np.allclose(diag, np.diag(P), atol=1e-10)
    sol = principal_submatrix_solve(model, active, v)
    assert np.allclose(sol, P @ v, atol=1e-10)


def test_cholesky_factor_reproduces_matrix():
    model = CovarianceModel.successive(6, 0.4, 2.0)
    L = cholesky_factor(model)
    assert np.allclose(L @ L.T, model.to_dense())


def test_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, A)
    assert np.array_equal(read_matrix_csv(path), A)
