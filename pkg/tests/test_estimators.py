import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mrdtest import (
    BenjaminiHochberg,
    CovarianceModel,
    DunnettStepDown,
    HolmStepDown,
    LikelihoodRatioStepDown,
    MaximumResidualDown,
)
from mrdtest.critical_values import schedule_mrd_two_sided
from mrdtest.procedures import mrd


@pytest.fixture
def model():
    return CovarianceModel.intraclass(5, 0.5)


def test_get_set_params_and_clone(model):
    est = MaximumResidualDown(model, sided="one", factor=0.6)
    params = est.get_params()
    assert params["sided"] == "one" and params["factor"] == 0.6
    twin = clone(est)
    assert twin.get_params()["factor"] == 0.6
    assert not hasattr(twin, "model_")
    est.set_params(alpha=0.1)
    assert est.alpha == 0.1


def test_not_fitted(model):
    with pytest.raises(NotFittedError):
        MaximumResidualDown(model).predict(np.zeros(5))


def test_auto_schedule_and_decide_match_function(model):
    est = MaximumResidualDown(model).fit()
    assert est.schedule_ == schedule_mrd_two_sided(5, 0.05, 0.71)
    x = np.array([4.0, 0.1, -3.5, 0.2, 0.0])
    assert np.array_equal(est.decide(x).reject, mrd(x, model, est.schedule_).reject)


def test_predict_shapes(model):
    est = MaximumResidualDown(model).fit()
    X = np.random.default_rng(0).normal(0, 2, (4, 5))
    assert est.predict(X).shape == (4, 5)
    assert est.predict(X[0]).shape == (5,)
    assert est.fit_predict(X).dtype == bool
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))


def test_predict_with_variance(model):
    est = MaximumResidualDown(model, schedule=[5, 4, 3, 2, 1]).fit()
    X = np.tile([6.0, 0.0, 0.0, 0.0, 0.0], (2, 1))
    flags = est.predict(X, s2=[1.0, 100.0], nu=20)
    assert flags[0, 0] and not flags[1, 0]


def test_transform_is_stage_one_residual():
    est = MaximumResidualDown(CovarianceModel.intraclass(2, 0.5)).fit()
    u = est.transform([1.0, 0.0])
    assert np.allclose(u, [1 / np.sqrt(0.75), -0.5 / np.sqrt(0.75)])


def test_dense_array_covariance():
    est = MaximumResidualDown(np.eye(3), schedule=[3, 2, 1]).fit()
    assert est.predict([3.5, 0.0, -2.5]).tolist() == [True, False, True]


def test_lrsd_estimator_defaults(model):
    est = LikelihoodRatioStepDown(model).fit()
    assert est.sided == "one"
    assert est.predict(np.zeros(5)).sum() == 0
    with pytest.raises(ValueError):
        est.decide(np.zeros(5), (1.0, 10))


def test_comparator_estimators(model):
    x = np.array([5.0, 0.0, 0.0, 0.0, 0.0])
    assert BenjaminiHochberg(model).fit().predict(x).tolist() == [True] + [False] * 4
    assert HolmStepDown(model).fit().predict(x).tolist() == [True] + [False] * 4
    d = DunnettStepDown(model, draws=20_000).fit()
    assert d.calibration_.k_max == 5
    assert d.predict(x)[0]


def test_dunnett_requires_intraclass():
    with pytest.raises(Exception):
        DunnettStepDown(CovarianceModel.changepoint(3), draws=1000).fit()


def test_bad_sided(model):
    with pytest.raises(ValueError):
        MaximumResidualDown(model, sided="both").fit()
