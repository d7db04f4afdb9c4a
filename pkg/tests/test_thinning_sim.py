from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rrminar.model import DomainError, MinarCoefficients, StationarityError
from rrminar.tensor_core import kron, numerical_rank, spectral_radius, vec
from rrminar.thinning_sim import (
    SimulationSetting,
    gen_coefficients,
    gen_innovation_rates,
    make_rng,
    matrix_thin,
    poisson_thin,
    simulate_minar,
    simulate_vectorized,
)
from rrminar.theory_checks import stationary_mean


def test_poisson_thin_degenerate():
    rng = make_rng(0)
    assert np.all(poisson_thin(0.0, 12, rng, size=100) == 0)
    assert np.all(poisson_thin(0.8, 0, rng, size=100) == 0)
    with pytest.raises(DomainError):
        poisson_thin(-0.1, 3, rng)


def test_poisson_thin_moments():
    N = 100_000
    draws = poisson_thin(0.7, 10, make_rng(1), size=N)
    # Poisson(7): Var(mean) = 7/N, Var(sample var) ~ (mu4 - 7^2)/N with mu4 = 7 + 3*7^2
    assert abs(draws.mean() - 7.0) <= 3 * np.sqrt(7.0 / N)
    assert abs(draws.var(ddof=1) - 7.0) <= 4 * np.sqrt((7 + 3 * 49 - 49) / N)


def test_matrix_thin_zero_cases():
    rng = make_rng(2)
    Y = np.array([[3, 1], [0, 5]])
    A = np.array([[0.3, 0.2], [0.1, 0.4]])
    assert_array_equal(matrix_thin(np.zeros((2, 2)), Y, A, rng), 0)
    assert_array_equal(matrix_thin(A, Y, np.zeros((2, 2)), rng), 0)
    assert_array_equal(matrix_thin(A, np.zeros((2, 2), int), A, rng), 0)
    with pytest.raises(DomainError):
        matrix_thin(-A, Y, A, rng)


@pytest.mark.parametrize("method", ["aggregate", "elementwise"])
def test_matrix_thin_conditional_moments(method):
    rng = make_rng(3)
    A = np.array([[0.3, 0.2], [0.1, 0.4]])
    B = np.array([[0.5, 0.1], [0.2, 0.6]])
    Y = np.array([[4, 2], [1, 6]])
    N = 20_000
    draws = np.array([matrix_thin(A, Y, B, rng, method) for _ in range(N)]).reshape(N, -1, order="C")
    mean = A @ Y @ B.T
    assert np.all(np.abs(draws.mean(axis=0) - mean.ravel()) <= 4 * np.sqrt(mean.ravel() / N))
    cov = np.cov(draws, rowvar=False)
    assert_allclose(np.diag(cov), mean.ravel(), rtol=0.1)
    off = cov[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) <= 4 * mean.max() / np.sqrt(N))


def test_simulate_pure_innovation():
    C = np.array([[1.0, 2.0], [0.5, 3.0]])
    coeffs = MinarCoefficients(np.zeros((2, 2)), np.zeros((2, 2)), C)
    s = simulate_minar(coeffs, 20_000, 10, make_rng(4))
    assert_allclose(s.frames.mean(axis=0), C, rtol=0.05)
    zero = MinarCoefficients(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    assert np.all(simulate_minar(zero, 50, 5, make_rng(4)).frames == 0)


def test_simulate_stationary_mean():
    A = np.array([[0.5, 0.2], [0.1, 0.4]])
    B = np.array([[0.8, 0.3], [0.2, 0.7]])
    C = np.array([[1.0, 2.0], [0.5, 1.5]])
    coeffs = MinarCoefficients(A, B, C)
    assert coeffs.is_stationary
    s = simulate_minar(coeffs, 20_000, 200, make_rng(5))
    mu = np.linalg.solve(np.eye(4) - kron(B, A), vec(C)).reshape(2, 2, order="F")
    assert_allclose(s.frames.mean(axis=0), mu, rtol=0.05)


def test_simulate_rejects_bad_coefficients():
    with pytest.raises(StationarityError):
        simulate_minar(MinarCoefficients(np.eye(2), np.eye(2), np.ones((2, 2))), 10, 0, make_rng(0))
    with pytest.raises(DomainError):
        simulate_minar(MinarCoefficients(-0.1 * np.eye(2), np.eye(2), np.ones((2, 2))), 10, 0, make_rng(0))


def test_vectorized_recursion_matches_moments():
    A = np.array([[0.4, 0.3], [0.2, 0.3]])
    B = np.array([[0.9, 0.2], [0.1, 0.6]])
    C = np.array([[1.0, 0.5], [2.0, 1.0]])
    coeffs = MinarCoefficients(A, B, C)
    a = simulate_minar(coeffs, 30_000, 200, make_rng(6)).frames.reshape(30_000, -1)
    b = simulate_vectorized(kron(B, A), vec(C), 2, 2, 30_000, 200, make_rng(6)).frames.reshape(30_000, -1)
    assert_allclose(a.mean(axis=0), b.mean(axis=0), rtol=0.05)
    assert_allclose(a.var(axis=0), b.var(axis=0), rtol=0.15)


def test_gen_coefficients_contract():
    rng = make_rng(7)
    for _ in range(30):
        m, n = rng.integers(1, 7, size=2)
        k1, k2 = rng.integers(1, m + 1), rng.integers(1, n + 1)
        c = gen_coefficients(int(m), int(n), int(k1), int(k2), rng)
        assert numerical_rank(c.A) == k1 and numerical_rank(c.B) == k2
        assert np.linalg.norm(c.A) == pytest.approx(1.0, abs=1e-10)
        assert spectral_radius(c.A) * spectral_radius(c.B) == pytest.approx(0.9)
        assert c.is_nonnegative


def test_gen_coefficients_full_rank_and_determinism():
    c1 = gen_coefficients(3, 2, 3, 2, make_rng(8))
    c2 = gen_coefficients(3, 2, 3, 2, make_rng(8))
    assert (c1.k1, c1.k2) == (3, 2)
    for M1, M2 in ((c1.A, c2.A), (c1.B, c2.B), (c1.C, c2.C)):
        assert M1.tobytes() == M2.tobytes()
    with pytest.raises(ValueError):
        gen_coefficients(3, 3, 5, 1, make_rng(0))


def test_innovation_rates_by_scheme():
    rng = make_rng(9)
    assert_array_equal(gen_innovation_rates(SimulationSetting("I", 3, 3, 1, 1, 10), rng), np.ones((3, 3)))
    C2 = gen_innovation_rates(SimulationSetting("II", 4, 3, 1, 1, 10), rng)
    assert np.all((C2 > 0) & (C2 < 1))


def test_setting_three_rates_rebuild_from_factors(caplog):
    with caplog.at_level("WARNING"):
        C, (Sr, Sc) = gen_innovation_rates(SimulationSetting("III", 3, 4, 1, 1, 10), make_rng(10), return_factors=True)
    assert "Setting III" in caplog.text
    assert np.all(C > 0)
    assert_allclose(vec(C), np.diag(kron(Sc, Sr)), rtol=1e-12)
    for S in (Sr, Sc):
        assert_allclose(S, S.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(S) > 0)


def test_setting_validation():
    with pytest.raises(ValueError):
        SimulationSetting("IV", 3, 3, 1, 1, 10)
    with pytest.raises(ValueError):
        SimulationSetting("I", 3, 3, 4, 1, 10)
    with pytest.raises(ValueError):
        SimulationSetting("I", 3, 3, 1, 1, 0)
    with pytest.raises(ValueError):
        SimulationSetting("I", 3, 3, 1, 1, 10, burn_in=-1)


def test_simulation_deterministic_given_seed():
    c = gen_coefficients(3, 2, 1, 1, make_rng(11))
    a = simulate_minar(c, 100, 20, make_rng(12))
    b = simulate_minar(c, 100, 20, make_rng(12))
    assert_array_equal(a.frames, b.frames)
    assert_allclose(a.frames.mean(), stationary_mean(c).mean(), rtol=0.5)
