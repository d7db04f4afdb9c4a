"""Poisson thinning operators and MINAR(1) path simulation.

Random numbers come from ``numpy.random.Generator`` with the PCG64 bit
generator (``make_rng``); every function takes the generator explicitly.

Simulation uses Poisson additivity: given ``X_{t-1}``, the thinned sum
``(A * X_{t-1} * B^T)_{ij}`` is a sum of independent Poisson variables with
total rate ``(A X_{t-1} B^T)_{ij}``, so it is drawn as one Poisson variate.
``matrix_thin(..., method="elementwise")`` keeps the literal per-(i, j, k, l)
construction for testing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import CountMatrixSeries, DomainError, MinarCoefficients
from .tensor_core import DimensionError, spectral_radius, vec

log = logging.getLogger(__name__)

SCHEMES = ("I", "II", "III")
RNG_ALGORITHM = f"numpy {np.__version__} Generator(PCG64)"


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int or ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SimulationSetting:
    scheme: str
    m: int
    n: int
    k1: int
    k2: int
    T: int
    burn_in: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        check_rank_bounds(self.m, self.n, self.k1, self.k2)
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    @property
    def label(self) -> str:
        return f"{self.scheme}_{self.m}x{self.n}_r{self.k1}{self.k2}"


def check_rank_bounds(m: int, n: int, k1: int, k2: int) -> None:
    if not 1 <= k1 <= m:
        raise ValueError(f"k1 = {k1} must lie in [1, m = {m}]")
    if not 1 <= k2 <= n:
        raise ValueError(f"k2 = {k2} must lie in [1, n = {n}]")


def poisson_thin(alpha, x, rng: np.random.Generator, size=None):
    """``alpha o x``: a sum of ``x`` i.i.d. Poisson(alpha) draws, sampled as Poisson(alpha * x)."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x)
    if np.any(alpha < 0):
        raise DomainError("thinning parameter must be nonnegative")
    if np.any(x < 0):
        raise DomainError("thinned count must be nonnegative")
    return rng.poisson(alpha * x, size=size)


def matrix_thin(A, Y, B, rng: np.random.Generator, method: str = "aggregate") -> np.ndarray:
    """``A * Y * B^T`` with independent Poisson thinnings in every cell."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Y = np.asarray(Y)
    m, n = Y.shape
    if A.shape != (m, m) or B.shape != (n, n):
        raise DimensionError(f"A {A.shape}, Y {Y.shape}, B {B.shape} do not conform")
    if np.any(A < 0) or np.any(B < 0):
        raise DomainError("thinning coefficients must be nonnegative")
    if np.any(Y < 0):
        raise DomainError("thinned counts must be nonnegative")
    if method == "aggregate":
        return rng.poisson(A @ Y @ B.T)
    if method == "elementwise":
        # rates[i, j, k, l] = beta_{j,l} * alpha_{i,k} * y_{k,l}
        rates = np.einsum("ik,jl,kl->ijkl", A, B, Y.astype(float))
        return rng.poisson(rates).sum(axis=(2, 3))
    raise ValueError(f"unknown thinning method {method!r}")


def stationary_start(coeffs: MinarCoefficients) -> np.ndarray:
    m, n = coeffs.m, coeffs.n
    mu = np.linalg.solve(np.eye(m * n) - coeffs.kron(), vec(coeffs.C))
    return np.rint(mu).reshape((m, n), order="F").astype(np.int64)


def simulate_minar(
    coeffs: MinarCoefficients, T: int, burn_in: int = 200, rng: np.random.Generator | None = None
) -> CountMatrixSeries:
    """Sample ``T`` frames of ``X_t = A * X_{t-1} * B^T + E_t``, ``E_t ~ Poisson(C)``."""
    if rng is None:
        raise ValueError("an explicit random generator is required")
    if T < 1 or burn_in < 0:
        raise ValueError("need T >= 1 and burn_in >= 0")
    coeffs.require_thinning_parameters()
    coeffs.require_stationary()
    A, Bt, C = coeffs.A, coeffs.B.T, coeffs.C
    X = stationary_start(coeffs)
    out = np.empty((T, coeffs.m, coeffs.n), dtype=np.int64)
    for t in range(burn_in + T):
        X = rng.poisson(A @ X @ Bt + C)
        if t >= burn_in:
            out[t - burn_in] = X
    return CountMatrixSeries(out)


def simulate_vectorized(
    Phi, c, m: int, n: int, T: int, burn_in: int = 200, rng: np.random.Generator | None = None
) -> CountMatrixSeries:
    """Sample ``vec(X_t) = Phi o vec(X_{t-1}) + e_t`` with Poisson(c) innovations."""
    if rng is None:
        raise ValueError("an explicit random generator is required")
    Phi = np.asarray(Phi, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    if Phi.shape != (m * n, m * n) or c.shape != (m * n,):
        raise DimensionError("Phi must be mn x mn and c of length mn")
    if np.any(Phi < 0) or np.any(c < 0):
        raise DomainError("Phi and c must be nonnegative")
    if spectral_radius(Phi) >= 1:
        raise ValueError("Phi is not stable")
    x = np.rint(np.linalg.solve(np.eye(m * n) - Phi, c)).astype(np.int64)
    out = np.empty((T, m, n), dtype=np.int64)
    for t in range(burn_in + T):
        x = rng.poisson(Phi @ x + c)
        if t >= burn_in:
            out[t - burn_in] = x.reshape((m, n), order="F")
    return CountMatrixSeries(out)


def _random_spd(d: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    lam = np.abs(rng.standard_normal(d))
    return (Q * lam) @ Q.T


def innovation_factors(scheme: str, m: int, n: int, rng: np.random.Generator):
    """Row and column covariance factors ``(Sigma_r, Sigma_c)`` for Setting III."""
    if scheme != "III":
        raise ValueError("only Setting III has Kronecker covariance factors")
    return _random_spd(m, rng), _random_spd(n, rng)


def gen_innovation_rates(setting: SimulationSetting, rng: np.random.Generator, return_factors: bool = False):
    """Poisson rate matrix ``C`` with ``vec(C)`` equal to the diagonal of the scheme's covariance."""
    m, n = setting.m, setting.n
    factors = None
    if setting.scheme == "I":
        C = np.ones((m, n))
    elif setting.scheme == "II":
        C = rng.uniform(0.0, 1.0, size=(m, n))
        # uniform() samples [0, 1); keep rates strictly inside (0, 1)
        C[C == 0.0] = np.nextafter(0.0, 1.0)
    else:
        log.warning(
            "Setting III: off-diagonal innovation covariance is dropped; "
            "rates use diag(Sigma_c kron Sigma_r) with independent Poisson draws"
        )
        Sr, Sc = innovation_factors("III", m, n, rng)
        C = np.outer(np.diag(Sr), np.diag(Sc))
        factors = (Sr, Sc)
    return (C, factors) if return_factors else C


def _abs_gaussian_lowrank(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    P = np.abs(rng.standard_normal((d, k)))
    Q = np.abs(rng.standard_normal((d, k)))
    return P @ Q.T


def gen_coefficients(
    m: int,
    n: int,
    k1: int,
    k2: int,
    rng: np.random.Generator,
    scheme: str = "I",
    target: float = 0.9,
    max_tries: int = 100,
) -> MinarCoefficients:
    """Random nonnegative ``(A, B, C)`` with ranks ``(k1, k2)``, ``||A||_F = 1`` and ``rho(A) rho(B) = target``."""
    check_rank_bounds(m, n, k1, k2)
    if not 0 < target < 1:
        raise ValueError("target spectral product must lie in (0, 1)")
    for _ in range(max_tries):
        A = _abs_gaussian_lowrank(m, k1, rng)
        A /= np.linalg.norm(A)
        B = _abs_gaussian_lowrank(n, k2, rng)
        B *= target / (spectral_radius(A) * spectral_radius(B))
        coeffs = MinarCoefficients(A, B, np.zeros((m, n)))
        if coeffs.k1 == k1 and coeffs.k2 == k2:
            break
    else:
        raise RuntimeError("could not draw coefficients with the requested ranks")
    setting = SimulationSetting(scheme, m, n, k1, k2, T=1)
    C = gen_innovation_rates(setting, rng)
    return MinarCoefficients(A, B, C, k1, k2)
