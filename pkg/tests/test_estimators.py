import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mkdvlab import profiles as pr
from mkdvlab.estimators import BreatherModulationFitter, DoubleBacklundDecomposer
from mkdvlab.grid import Grid


@pytest.fixture(scope="module")
def data():
    g = Grid(40.0, 2048)
    x = g.nodes
    u = pr.breather(pr.BreatherParams(1.0, 1.0), g).real + 1e-3 * np.cos(3 * x) / np.cosh(x)
    return g, u


def test_params_round_trip():
    est = DoubleBacklundDecomposer(alpha=0.8, n=1024)
    assert est.get_params()["alpha"] == 0.8
    assert clone(est).get_params() == est.get_params()
    assert BreatherModulationFitter(beta_star=2.0).set_params(n=512).n == 512


def test_not_fitted(data):
    g, u = data
    with pytest.raises(NotFittedError):
        DoubleBacklundDecomposer().transform(u)
    with pytest.raises(NotFittedError):
        BreatherModulationFitter().transform(u[None])


def test_shape_checks(data):
    g, u = data
    with pytest.raises(ValueError):
        DoubleBacklundDecomposer().fit(u[:100])
    with pytest.raises(ValueError):
        DoubleBacklundDecomposer().fit(np.full(g.n, np.nan))


def test_decomposer_round_trip(data):
    g, u = data
    est = DoubleBacklundDecomposer().fit(u)
    y = est.transform(u)
    assert y.shape == (1, g.n)
    assert abs(est.alpha_star_ - 1) < 1e-2 and abs(est.beta_star_ - 1) < 1e-2
    assert np.max(np.abs(est.inverse_transform(y) - u)) < 1e-9
    assert np.allclose(est.fit_transform(u[None]), y)


def test_modulation_fitter(data):
    g, u = data
    B = pr.breather(pr.BreatherParams(1.0, 1.0, 0.3, -0.2), g).real
    f = BreatherModulationFitter().fit(np.array([B, u]), [0.0, 0.0])
    assert np.allclose(f.shifts_[0], [0.3, -0.2], atol=1e-9)
    z = f.transform(np.array([B, u]))
    assert np.max(np.abs(z[0])) < 1e-9
    assert f.tube_distance_[1] < 1e-2
    with pytest.raises(ValueError):
        f.fit(np.array([B, u]), [0.0])
