"""scikit-learn conventions shared by the four estimators."""

import numpy as np
import pytest
from sklearn.base import clone, is_regressor
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import KFold, cross_val_score

from waveselect import GLMRegressor, NonlinearRegressor, WaveletProcedureSelector, WaveletRegressor

ESTIMATORS = [
    WaveletRegressor(wavelet="daub2", j0=2),
    GLMRegressor(family="gamma", link="log"),
    NonlinearRegressor(model="f3"),
    WaveletProcedureSelector(candidates="f2,f3,f24", threshold="soft"),
]


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(5, 210, 160))
    y = 120 * x / (20 + x) + rng.normal(0, 1.0, 160)
    return x.reshape(-1, 1), y


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_params_and_clone(est):
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    assert is_regressor(est)
    assert type(est).__name__ in repr(est)
    key = next(iter(params))
    assert est.set_params(**{key: params[key]}) is est


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_fit_predict_contract(est, data):
    X, y = data
    est = clone(est)
    with pytest.raises(NotFittedError):
        est.predict(X)
    assert est.fit(X, y) is est
    assert est.n_features_in_ == 1
    pred = est.predict(X[:7])
    assert pred.shape == (7,) and np.all(np.isfinite(pred))
    assert est.score(X, y) > 0.5  # the log-linear GLM is a rough fit to this curve


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__)
def test_rejects_nan(est, data):
    X, y = data
    X = X.copy()
    X[3, 0] = np.nan
    with pytest.raises(ValueError):
        clone(est).fit(X, y)


def test_cross_validation(data):
    X, y = data
    folds = KFold(3, shuffle=True, random_state=0)
    scores = cross_val_score(WaveletProcedureSelector(candidates="f2,f3,f24"), X, y, cv=folds)
    assert np.all(scores > 0.9)
