import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qpath.estimator import LimitCycleQuasiPotential
from qpath.systems import get_system


@pytest.fixture(scope="module")
def fitted():
    return LimitCycleQuasiPotential("hopf").fit()


def test_params_and_clone():
    est = LimitCycleQuasiPotential("vdp", diffusion_case="ii", n_samples=256, tol=1e-9)
    params = est.get_params()
    assert params["diffusion_case"] == "ii" and params["n_samples"] == 256
    c = clone(est)
    assert c.get_params() == params and c is not est
    est.set_params(frame="frenet")
    assert est.frame == "frenet"


def test_not_fitted():
    est = LimitCycleQuasiPotential("hopf")
    with pytest.raises(NotFittedError):
        est.predict([[1.1, 0.0]])
    with pytest.raises(NotFittedError):
        est.minimum_action([1.5, 0.0])


def test_fitted_attributes(fitted):
    assert fitted.period_ == pytest.approx(2 * np.pi, rel=1e-8)
    assert fitted.n_features_in_ == 2
    np.testing.assert_allclose(fitted.G_.values, 4.0, atol=1e-6)


def test_transform_and_predict(fitted):
    X = np.array([[1.1, 0.0], [0.0, 0.95]])
    C = fitted.transform(X)
    assert C.shape == (2, 2)
    np.testing.assert_allclose(C[:, 1], [0.1, -0.05], atol=1e-9)
    np.testing.assert_allclose(fitted.predict(X), [0.02, 0.005], atol=1e-8)
    assert fitted.fit_transform(X).shape == (2, 2)


def test_guess_from_X_and_system_object():
    est = LimitCycleQuasiPotential(get_system("hopf"), n_samples=128).fit(np.array([[0.0, 1.3]]))
    assert est.period_ == pytest.approx(2 * np.pi, rel=1e-8)


def test_minimum_action(fitted):
    p = fitted.minimum_action([1.5, 0.0], N=20)
    assert p.converged
    assert p.total == pytest.approx(0.78125, abs=0.03)
    with pytest.raises(ValueError):
        fitted.minimum_action([1.5, 0.0], N=20, method="tmam")
