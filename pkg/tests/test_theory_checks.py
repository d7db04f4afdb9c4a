from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rrminar.estimators import fit_minar_iclse, fit_rrminar_iclse
from rrminar.model import MinarCoefficients, StationarityError
from rrminar.tensor_core import vec
from rrminar.theory_checks import (
    asymptotic_cov_plugin,
    innovation_cov_theoretical,
    innovations,
    kron_rate_statistic,
    residual_whiteness,
    scalar_plugin_variances,
    stationary_mean,
)
from rrminar.thinning_sim import gen_coefficients, make_rng, simulate_minar


def _scalar(a, b, c):
    return MinarCoefficients(np.array([[a]]), np.array([[b]]), np.array([[c]]))


def test_scalar_innovation_variance():
    c = _scalar(0.5, 0.5, 3.0)
    assert innovation_cov_theoretical(c)[0, 0] == pytest.approx(4.0)
    assert stationary_mean(c)[0, 0] == pytest.approx(4.0)


def test_pure_innovation_covariance_is_rate():
    C = np.array([[1.0, 2.0], [3.0, 4.0]])
    c = MinarCoefficients(np.zeros((2, 2)), np.zeros((2, 2)), C)
    assert_allclose(innovation_cov_theoretical(c), np.diag(vec(C)))
    with pytest.raises(StationarityError):
        stationary_mean(MinarCoefficients(np.eye(2), np.eye(2), C))


def test_whiteness_true_versus_perturbed():
    c = gen_coefficients(2, 2, 2, 2, make_rng(0))
    s = simulate_minar(c, 20_000, 200, make_rng(1))
    good = residual_whiteness(s, c).max_z()
    assert max(good.values()) < 5.0
    bad = MinarCoefficients(0.5 * c.A, c.B, c.C)
    z = residual_whiteness(s, bad).max_z()
    assert z["mean"] > 10.0 and z["lag1_crosscov"] > 10.0


def test_whiteness_exact_data_is_zero():
    c = _scalar(0.5, 0.8, 1.0)
    X = np.empty((30, 1, 1))
    X[0] = 7.0
    for t in range(1, 30):
        X[t] = c.forecast(X[t - 1])
    assert_allclose(innovations(X, c), 0.0, atol=1e-12)
    d = residual_whiteness(X, c)
    assert set(d.max_z().values()) == {0.0}
    with pytest.raises(ValueError):
        residual_whiteness(X[:5], c)


def test_plugin_shape_and_psd():
    c = gen_coefficients(3, 2, 1, 1, make_rng(2))
    s = simulate_minar(c, 600, 100, make_rng(3))
    res = fit_rrminar_iclse(s, 1, 1)
    comp = asymptotic_cov_plugin(s, res.coefficients, 1, 1, state=res.state)
    d = 9 + 4 + 6
    assert comp.Xi2.shape == (d, d) and comp.dims == (9, 4, 6)
    assert_allclose(comp.Xi2, comp.Xi2.T)
    assert np.linalg.eigvalsh(comp.Xi2).min() >= -1e-8 * np.abs(comp.Xi2).max()
    assert np.all(comp.standard_errors(600) >= 0)
    with pytest.raises(ValueError):
        asymptotic_cov_plugin(s.frames[:20], res.coefficients, 1, 1)


def test_scalar_plugin_variances_positive():
    c = _scalar(0.6, 1.0, 2.0)
    s = simulate_minar(c, 2000, 100, make_rng(4))
    fit = fit_minar_iclse(s)
    v = scalar_plugin_variances(s, fit.coefficients)
    assert v.shape == (3,) and np.all(v >= 0)
    assert v[1] > 0 and v[2] > 0


def test_kron_rate_statistic():
    c = _scalar(1.0, 0.5, 1.0)
    assert kron_rate_statistic(c, c, 100) == 0.0
    assert kron_rate_statistic(_scalar(1.0, 0.6, 1.0), c, 100) == pytest.approx(1.0)
