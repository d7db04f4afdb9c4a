"""Conditional least squares estimators for matrix count autoregressions.

All fitting functions accept a :class:`CountMatrixSeries` or a raw
``(T, m, n)`` array (handy for noiseless real-valued test systems).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import NEGATIVE_CORRECTIONS, CountMatrixSeries, MinarCoefficients, correct_negatives
from .tensor_core import DimensionError, nkp_rearrange_project, numerical_rank, pseudo_inverse, symmetric_eigen

log = logging.getLogger(__name__)


class RankDeficiencyWarning(UserWarning):
    """A regressor Gram matrix was numerically singular; a pseudoinverse was used."""


class UnderdeterminedWarning(UserWarning):
    """The model has far more free parameters than the series has time points."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Stopping and correction options for the iterative fits.

    ``delta=None`` means the stop threshold is ``1 / T``.
    """

    max_iterations: int = 2000
    delta: float | None = None
    ridge: float = 0.0
    negative_correction: str = "none"
    rel_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.negative_correction not in NEGATIVE_CORRECTIONS:
            raise ValueError(f"negative_correction must be one of {NEGATIVE_CORRECTIONS}")

    def threshold(self, T: int) -> float:
        return 1.0 / T if self.delta is None else self.delta

    @classmethod
    def from_delta_rule(cls, rule: str, **kwargs) -> "FitConfig":
        """Parse ``inv_t`` or ``fixed:<x>``."""
        if rule == "inv_t":
            return cls(delta=None, **kwargs)
        if rule.startswith("fixed:"):
            try:
                value = float(rule.split(":", 1)[1])
            except ValueError as exc:
                raise ValueError(f"bad delta rule {rule!r}") from exc
            return cls(delta=value, **kwargs)
        raise ValueError(f"delta rule must be 'inv_t' or 'fixed:<x>', got {rule!r}")


@dataclass
class EstimatorState:
    S1yx: np.ndarray
    S1xx: np.ndarray
    S2yx: np.ndarray
    S2xx: np.ndarray
    U_top_k1: np.ndarray
    U_top_k2: np.ndarray


@dataclass
class EstimationResult:
    coefficients: MinarCoefficients
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    stop_delta: float
    negatives_corrected: bool
    state: EstimatorState | None = None
    raw_coefficients: MinarCoefficients | None = None
    model: str = "MINAR"

    @property
    def order(self) -> int:
        return 1

    def predict_frames(self, frames) -> np.ndarray:
        return self.coefficients.predict_frames(frames)

    def kron(self) -> np.ndarray:
        return self.coefficients.kron()


def _frames(series) -> np.ndarray:
    if isinstance(series, CountMatrixSeries):
        return series.as_float()
    X = np.asarray(series, dtype=float)
    if X.ndim != 3:
        raise DimensionError(f"expected a (T, m, n) array, got shape {X.shape}")
    return X


def _vec_frames(X: np.ndarray) -> np.ndarray:
    """Rows are ``vec(X_t)`` (column stacking)."""
    T, m, n = X.shape
    return X.transpose(0, 2, 1).reshape(T, m * n)


def objective_value(series, A, B, C) -> float:
    """Sum over t >= 2 of ``||X_t - A X_{t-1} B^T - C||_F^2``."""
    X = _frames(series)
    if X.shape[0] < 2:
        raise InsufficientDataError("objective needs at least two frames")
    A, B, C = (np.asarray(M, dtype=float) for M in (A, B, C))
    m, n = X.shape[1:]
    if A.shape != (m, m) or B.shape != (n, n) or C.shape != (m, n):
        raise DimensionError("coefficient shapes do not match the series")
    R = X[1:] - A @ X[:-1] @ B.T - C
    return float(np.sum(R * R))


class MginarModel(NamedTuple):
    """``vec(X_t) = Phi vec(X_{t-1}) + c``; unpacks as ``(Phi, c)``."""

    Phi: np.ndarray
    c: np.ndarray

    @property
    def order(self) -> int:
        return 1

    def predict_frames(self, frames) -> np.ndarray:
        X = np.asarray(frames, dtype=float)
        T, m, n = X.shape
        V = _vec_frames(X[:-1]) @ self.Phi.T + self.c
        return V.reshape(T - 1, n, m).transpose(0, 2, 1)

    def kron(self) -> np.ndarray:
        return self.Phi


def _regress(Xr: np.ndarray, Yr: np.ndarray, with_intercept: bool, rel_tol: float, label: str):
    """Least squares of rows of ``Yr`` on rows of ``Xr``; returns ``(coef, intercept)``."""
    d = Xr.shape[1]
    if with_intercept:
        xbar = Xr.mean(axis=0)
        ybar = Yr.mean(axis=0)
        Xc = Xr - xbar
        Yc = Yr - ybar
    else:
        xbar = np.zeros(d)
        ybar = np.zeros(Yr.shape[1])
        Xc, Yc = Xr, Yr
    G = Xc.T @ Xc
    if numerical_rank(G, rel_tol) < d:
        warnings.warn(
            f"{label}: regressor Gram matrix is rank deficient; using the minimum-norm solution",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    coef = (Yc.T @ Xc) @ pseudo_inverse(G, rel_tol)
    return coef, ybar - coef @ xbar


def fit_mginar_lse(series, with_intercept: bool = True, rel_tol: float = 1e-10) -> MginarModel:
    """Least squares for the unrestricted vector model ``vec(X_t) = Phi vec(X_{t-1}) + c``.

    The intercept is handled by centering, so a constant series gives
    ``Phi = 0`` and ``c = vec(X)`` under the minimum-norm convention.
    """
    X = _frames(series)
    T, m, n = X.shape
    mn = m * n
    if T < mn + 2:
        raise InsufficientDataError(f"MGINAR least squares needs T >= mn + 2 = {mn + 2}, got T = {T}")
    if mn * mn > T:
        warnings.warn(
            f"MGINAR has {mn * mn} autoregressive parameters but only T = {T} frames; "
            "the fit is under-determined and relies on the pseudoinverse",
            UnderdeterminedWarning,
            stacklevel=2,
        )
    V = _vec_frames(X)
    Phi, c = _regress(V[:-1], V[1:], with_intercept, rel_tol, "MGINAR")
    return MginarModel(Phi, c)


def projection_init(series, rel_tol: float = 1e-10):
    """Starting values ``(A0, B0, C0)`` from the nearest Kronecker product of the MGINAR fit."""
    X = _frames(series)
    T, m, n = X.shape
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderdeterminedWarning)
        Phi, _ = fit_mginar_lse(X, rel_tol=rel_tol)
    A0, B0 = nkp_rearrange_project(Phi, m, n)
    C0 = np.mean(X[1:] - A0 @ X[:-1] @ B0.T, axis=0)
    return A0, B0, C0


def _solve_gram(Syx: np.ndarray, Sxx: np.ndarray, ridge: float, rel_tol: float, label: str) -> np.ndarray:
    if ridge > 0:
        Sxx = Sxx + ridge * np.eye(Sxx.shape[0])
    r = numerical_rank(Sxx, rel_tol)
    if r == 0:
        raise np.linalg.LinAlgError(f"{label} Gram matrix has effective rank 0")
    if r < Sxx.shape[0]:
        warnings.warn(f"{label} Gram matrix is singular; using a pseudoinverse", RankDeficiencyWarning, stacklevel=3)
    return Syx @ pseudo_inverse(Sxx, rel_tol)


def _reduced_rank_step(Syx, Sxx, k, ridge, rel_tol, label):
    """Rank-``k`` minimiser of ``sum ||Y - M X||^2`` given the moment matrices."""
    G = _solve_gram(Syx, Sxx, ridge, rel_tol, label)
    d = G.shape[0]
    if k >= d:
        return G, np.eye(d)
    U = symmetric_eigen(G @ Syx.T).top(k)
    return U @ (U.T @ G), U


def truncate_rank(M: np.ndarray, k: int) -> np.ndarray:
    """Best rank-``k`` approximation in Frobenius norm."""
    if k >= min(M.shape):
        return M
    U, s, Vt = np.linalg.svd(M)
    return (U[:, :k] * s[:k]) @ Vt[:k]


def _normalize(A: np.ndarray, B: np.ndarray):
    s = np.linalg.norm(A)
    if s == 0.0:
        return A, B
    if A.sum() < 0:
        s = -s
    return A / s, B * s


def _iclse(X, k1, k2, init, config: FitConfig, model: str) -> EstimationResult:
    T, m, n = X.shape
    if T < 2:
        raise InsufficientDataError("ICLSE needs at least two frames")
    if init is None:
        init = projection_init(X, config.rel_tol)
    A, B, C = (np.array(M, dtype=float) for M in init)
    if A.shape != (m, m) or B.shape != (n, n) or C.shape != (m, n):
        raise DimensionError("initial values do not match the series dimensions")
    # start from a feasible point so the objective trace is monotone from step 0
    A, B = _normalize(truncate_rank(A, k1), truncate_rank(B, k2))
    Xp, Y = X[:-1], X[1:]
    delta = config.threshold(T)

    def obj(A, B, C):
        R = Y - A @ Xp @ B.T - C
        return float(np.sum(R * R))

    trace = [obj(A, B, C)]
    best = (trace[0], A, B, C)
    converged = False
    stop_delta = math.inf
    state = None
    it = 0
    for it in range(1, config.max_iterations + 1):
        Yc = Y - C
        XB = Xp @ B.T
        S1xx = np.einsum("tik,tjk->ij", XB, XB)
        S1yx = np.einsum("tik,tjk->ij", Yc, XB)
        A_new, U1 = _reduced_rank_step(S1yx, S1xx, k1, config.ridge, config.rel_tol, "row (A)")
        AX = A_new @ Xp
        S2xx = np.einsum("tki,tkj->ij", AX, AX)
        S2yx = np.einsum("tki,tkj->ij", Yc, AX)
        B_new, U2 = _reduced_rank_step(S2yx, S2xx, k2, config.ridge, config.rel_tol, "column (B)")
        C_new = np.mean(Y - A_new @ Xp @ B_new.T, axis=0)
        A_new, B_new = _normalize(A_new, B_new)
        deltas = (
            np.linalg.norm(A_new - A),
            np.linalg.norm(B_new - B),
            np.linalg.norm(C_new - C),
        )
        A, B, C = A_new, B_new, C_new
        state = EstimatorState(S1yx, S1xx, S2yx, S2xx, U1, U2)
        f = obj(A, B, C)
        trace.append(f)
        if f <= best[0]:
            best = (f, A, B, C)
        stop_delta = max(deltas)
        if stop_delta < delta:
            converged = True
            break
    _, A, B, C = best
    raw = MinarCoefficients(A, B, C, k1, k2)
    coeffs = raw
    corrected = False
    if config.negative_correction != "none":
        coeffs = raw.corrected(config.negative_correction)
        corrected = not (
            np.array_equal(coeffs.A, raw.A) and np.array_equal(coeffs.B, raw.B) and np.array_equal(coeffs.C, raw.C)
        )
    if not converged:
        log.info("%s ICLSE stopped after %d iterations (last change %.3g)", model, it, stop_delta)
    return EstimationResult(
        coefficients=coeffs,
        objective_trace=np.asarray(trace),
        iterations=it,
        converged=converged,
        stop_delta=float(stop_delta),
        negatives_corrected=corrected,
        state=state,
        raw_coefficients=raw,
        model=model,
    )


def fit_minar_iclse(series, init=None, config: FitConfig | None = None) -> EstimationResult:
    """Alternating exact block minimisation for the unrestricted bilinear model."""
    X = _frames(series)
    _, m, n = X.shape
    return _iclse(X, m, n, init, config or FitConfig(), "MINAR")


def fit_rrminar_iclse(series, k1: int, k2: int, init=None, config: FitConfig | None = None) -> EstimationResult:
    """Alternating reduced-rank regression with ``rank(A) <= k1`` and ``rank(B) <= k2``."""
    X = _frames(series)
    _, m, n = X.shape
    if not 1 <= k1 <= m or not 1 <= k2 <= n:
        raise ValueError(f"ranks ({k1}, {k2}) out of bounds for a {m}x{n} series")
    return _iclse(X, k1, k2, init, config or FitConfig(), "RRMINAR")


class InarFit(NamedTuple):
    alphas: np.ndarray
    intercept: float


def fit_inar_cls(counts, p: int, negative_correction: str = "none", rel_tol: float = 1e-10) -> InarFit:
    """Least squares of ``x_t`` on ``(1, x_{t-1}, ..., x_{t-p})``."""
    x = np.asarray(counts, dtype=float).reshape(-1)
    if p < 1:
        raise ValueError("p must be at least 1")
    if x.size < p + 2:
        raise InsufficientDataError(f"INAR({p}) needs at least {p + 2} observations, got {x.size}")
    lags = np.column_stack([x[p - k - 1 : x.size - k - 1] for k in range(p)])
    coef, lam = _regress(lags, x[p:, None], True, rel_tol, f"INAR({p})")
    alphas = correct_negatives(coef[0], negative_correction)
    lam = float(correct_negatives(lam, negative_correction)[0])
    return InarFit(alphas, lam)


@dataclass
class IinarModel:
    """Independent INAR(p) fits, one per cell."""

    alphas: np.ndarray  # (m, n, p)
    intercepts: np.ndarray  # (m, n)

    @property
    def order(self) -> int:
        return self.alphas.shape[2]

    def predict_frames(self, frames) -> np.ndarray:
        X = np.asarray(frames, dtype=float)
        p = self.order
        out = np.broadcast_to(self.intercepts, (X.shape[0] - p,) + self.intercepts.shape).copy()
        for k in range(p):
            out += self.alphas[:, :, k] * X[p - k - 1 : X.shape[0] - k - 1]
        return out

    def kron(self) -> np.ndarray:
        """Lag-one coefficients placed on the diagonal of an mn x mn matrix."""
        return np.diag(self.alphas[:, :, 0].reshape(-1, order="F"))


def fit_iinar(series, p: int, negative_correction: str = "none") -> IinarModel:
    X = _frames(series)
    T, m, n = X.shape
    alphas = np.zeros((m, n, p))
    lam = np.zeros((m, n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        for i in range(m):
            for j in range(n):
                fit = fit_inar_cls(X[:, i, j], p, negative_correction)
                alphas[i, j] = fit.alphas
                lam[i, j] = fit.intercept
    return IinarModel(alphas, lam)


def fit_rowwise_mginar(series) -> list[MginarModel]:
    """One vector model per row: row ``i`` of ``X_t`` regressed on row ``i`` of ``X_{t-1}``."""
    X = _frames(series)
    return [fit_mginar_lse(X[:, i : i + 1, :]) for i in range(X.shape[1])]


def fit_colwise_mginar(series) -> list[MginarModel]:
    X = _frames(series)
    return [fit_mginar_lse(X[:, :, j : j + 1]) for j in range(X.shape[2])]


def assemble_rowwise(models: list[MginarModel], m: int, n: int) -> MginarModel:
    """Embed per-row models into one block-structured ``vec``-space model."""
    Phi = np.zeros((m * n, m * n))
    c = np.zeros(m * n)
    for i, (Phi_i, c_i) in enumerate(models):
        idx = i + m * np.arange(n)
        Phi[np.ix_(idx, idx)] = Phi_i
        c[idx] = c_i
    return MginarModel(Phi, c)


def assemble_colwise(models: list[MginarModel], m: int, n: int) -> MginarModel:
    Phi = np.zeros((m * n, m * n))
    c = np.zeros(m * n)
    for j, (Phi_j, c_j) in enumerate(models):
        idx = np.arange(m) + m * j
        Phi[np.ix_(idx, idx)] = Phi_j
        c[idx] = c_j
    return MginarModel(Phi, c)


def corrected_mginar(model: MginarModel, mode: str) -> MginarModel:
    return MginarModel(correct_negatives(model.Phi, mode), correct_negatives(model.c, mode))


@dataclass
class FittedModel:
    """A named fitted forecaster with its equivalent ``vec``-space coefficient."""

    name: str
    forecaster: object
    info: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.forecaster.order

    def predict_frames(self, frames) -> np.ndarray:
        return self.forecaster.predict_frames(frames)

    def kron(self) -> np.ndarray:
        return self.forecaster.kron()


MODEL_NAMES = ("MGINAR", "MINAR", "RRMINAR", "iINAR1", "iINAR2", "MGINAR_row", "MGINAR_col")


def fit_model(
    name: str,
    series,
    config: FitConfig | None = None,
    ranks: tuple[int, int] | None = None,
) -> FittedModel:
    """Fit one of :data:`MODEL_NAMES`; negative entries are corrected per ``config``."""
    config = config or FitConfig()
    mode = config.negative_correction
    X = _frames(series)
    _, m, n = X.shape
    if name == "MGINAR":
        return FittedModel(name, corrected_mginar(fit_mginar_lse(X), mode))
    if name == "MINAR":
        res = fit_minar_iclse(X, config=config)
        return FittedModel(name, res, {"iterations": res.iterations, "converged": res.converged})
    if name == "RRMINAR":
        if ranks is None:
            raise ValueError("RRMINAR needs ranks (k1, k2)")
        res = fit_rrminar_iclse(X, ranks[0], ranks[1], config=config)
        info = {"iterations": res.iterations, "converged": res.converged, "ranks": tuple(ranks)}
        return FittedModel(name, res, info)
    if name in ("iINAR1", "iINAR2"):
        return FittedModel(name, fit_iinar(X, int(name[-1]), mode))
    if name == "MGINAR_row":
        return FittedModel(name, corrected_mginar(assemble_rowwise(fit_rowwise_mginar(X), m, n), mode))
    if name == "MGINAR_col":
        return FittedModel(name, corrected_mginar(assemble_colwise(fit_colwise_mginar(X), m, n), mode))
    raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
