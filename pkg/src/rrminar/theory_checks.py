"""Moment identities, residual whiteness and the plug-in asymptotic covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import EstimatorState, _frames
from .model import MinarCoefficients
from .tensor_core import kron, pseudo_inverse, unvec, vec


@dataclass
class AsymptoticComponents:
    Gamma1: np.ndarray
    Gamma2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    SigmaDelta: np.ndarray
    W: np.ndarray
    H: np.ndarray
    M: np.ndarray
    Xi2: np.ndarray
    singular: bool

    @property
    def dims(self) -> tuple[int, int, int]:
        """Lengths of the ``vec(A)``, ``vec(B^T)`` and ``vec(C)`` blocks."""
        m = self.P1.shape[0]
        n = self.P2.shape[0]
        return m * m, n * n, m * n

    def standard_errors(self, T: int) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.Xi2), 0.0, None) / T)


def _resolvent_mean(coeffs: MinarCoefficients) -> np.ndarray:
    coeffs.require_stationary()
    mn = coeffs.m * coeffs.n
    return np.linalg.solve(np.eye(mn) - coeffs.kron(), vec(coeffs.C))


def stationary_mean(coeffs: MinarCoefficients) -> np.ndarray:
    """``unvec((I - B kron A)^{-1} vec(C))``."""
    return unvec(_resolvent_mean(coeffs), coeffs.m, coeffs.n)


def innovation_cov_theoretical(coeffs: MinarCoefficients) -> np.ndarray:
    """Covariance of ``vec(Delta_t)``: ``diag((I - B kron A)^{-1} vec(C))``.

    Given the past, each cell of ``X_t`` is Poisson with mean equal to the
    one-step forecast, so the innovation variance is the stationary mean.
    """
    return np.diag(_resolvent_mean(coeffs))


def innovations(series, coeffs: MinarCoefficients) -> np.ndarray:
    """``Delta_t = X_t - A X_{t-1} B^T - C`` for ``t = 2..T`` as a ``(T-1, m, n)`` array."""
    X = _frames(series)
    return X[1:] - coeffs.predict_frames(X)


@dataclass
class WhitenessDiagnostics:
    mean_residual: np.ndarray
    lag0_cov: np.ndarray
    lag1_crosscov: np.ndarray
    lag1_autocov: np.ndarray
    se_mean: np.ndarray
    se_crosscov: np.ndarray
    se_autocov: np.ndarray

    def max_z(self) -> dict:
        """Largest |statistic / standard error| per diagnostic (0 where the SE is 0)."""

        def z(stat, se):
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(se > 0, np.abs(stat) / se, np.where(np.abs(stat) > 0, np.inf, 0.0))
            return float(np.max(r))

        return {
            "mean": z(self.mean_residual, self.se_mean),
            "lag1_crosscov": z(self.lag1_crosscov, self.se_crosscov),
            "lag1_autocov": z(self.lag1_autocov, self.se_autocov),
        }


def residual_whiteness(series, coeffs: MinarCoefficients) -> WhitenessDiagnostics:
    """Sample moments of ``vec(Delta_t)`` that vanish for a correctly specified model.

    Means are not subtracted from ``Delta`` (its true mean is zero), so exact
    data gives exactly zero statistics.  Standard errors are the usual
    i.i.d. ``sd(product) / sqrt(N)`` for each averaged product.
    """
    X = _frames(series)
    if X.shape[0] < 10:
        raise ValueError("residual diagnostics need T >= 10")
    D = innovations(X, coeffs)
    T1 = D.shape[0]
    d = D.transpose(0, 2, 1).reshape(T1, -1)
    x = X[:-1].transpose(0, 2, 1).reshape(T1, -1)
    x = x - x.mean(axis=0)

    def avg_and_se(U, V):
        prods = U[:, :, None] * V[:, None, :]
        N = prods.shape[0]
        return prods.mean(axis=0), prods.std(axis=0) / math.sqrt(N)

    mean = d.mean(axis=0)
    se_mean = d.std(axis=0) / math.sqrt(T1)
    lag0, _ = avg_and_se(d, d)
    cross, se_cross = avg_and_se(d, x)
    auto, se_auto = avg_and_se(d[1:], d[:-1])
    return WhitenessDiagnostics(mean, lag0, cross, auto, se_mean, se_cross, se_auto)


def _column_projector(M: np.ndarray, k: int) -> np.ndarray:
    U, _, _ = np.linalg.svd(M)
    Uk = U[:, :k]
    return Uk @ Uk.T


def asymptotic_cov_plugin(
    series,
    coeffs: MinarCoefficients,
    k1: int,
    k2: int,
    state: EstimatorState | None = None,
    rel_tol: float = 1e-10,
) -> AsymptoticComponents:
    """Sample-average plug-in for the limiting covariance of ``sqrt(T) theta_hat``.

    ``theta = (vec(A), vec(B^T), vec(C))``.  Expectations become time averages
    over ``X_{t-1}``; ``Sigma_Delta`` is the sample covariance of the
    innovations.  ``Xi2 = H^+ avg(Q Sigma Q^T) (H^+)^T``, symmetrised.
    """
    X = _frames(series)
    T, m, n = X.shape
    if T < 50:
        raise ValueError("the plug-in covariance needs T >= 50")
    A, B, C = coeffs.A, coeffs.B, coeffs.C
    Im, In = np.eye(m), np.eye(n)
    if state is not None:
        P1 = state.U_top_k1 @ state.U_top_k1.T
        P2 = state.U_top_k2 @ state.U_top_k2.T
    else:
        P1 = _column_projector(A, k1)
        P2 = _column_projector(B, k2)
    Xp = X[:-1]
    N = Xp.shape[0]
    XBt = Xp @ B.T  # X B^T, (N, m, n)
    AX = A @ Xp  # A X, (N, m, n)
    Gamma1 = np.einsum("tki,tkj->ij", AX, AX) / N  # avg X^T A^T A X
    Gamma2 = np.einsum("tik,tjk->ij", XBt, XBt) / N  # avg X B^T B X^T
    L2 = Gamma2 @ A.T @ pseudo_inverse(A @ Gamma2 @ A.T, rel_tol) @ A
    L1 = Gamma1 @ B.T @ pseudo_inverse(B @ Gamma1 @ B.T, rel_tol) @ B

    dA, dB, dC = m * m, n * n, m * n
    d = dA + dB + dC
    W = np.zeros((d, d))
    Qs = np.zeros((N, d, dC))
    iA, iB, iC = slice(0, dA), slice(dA, dA + dB), slice(dA + dB, d)
    for t in range(N):
        Xt, XB, AXt = Xp[t], XBt[t], AX[t]
        BXt = XB.T
        XtAt = AXt.T
        W[iA, iA] += np.kron(XB @ XB.T, Im)
        W[iA, iB] += np.kron(XB, AXt)
        W[iA, iC] += np.kron(XB, P1)
        W[iB, iA] += np.kron(BXt, XtAt)
        W[iB, iB] += np.kron(In, XtAt @ AXt)
        W[iB, iC] += np.kron(P2, XtAt)
        W[iC, iA] += np.kron(BXt, Im)
        W[iC, iB] += np.kron(In, AXt)
        W[iC, iC] += np.eye(dC)
        Qs[t, iA] = np.kron(XB, P1) + np.kron(L2 @ Xt @ B.T, Im - P1)
        Qs[t, iB] = np.kron(P2, XtAt) + np.kron(In - P2, L1 @ Xt.T @ A.T)
        Qs[t, iC] = np.eye(dC)
    W /= N
    D = (X[1:] - A @ Xp @ B.T - C).transpose(0, 2, 1).reshape(N, dC)
    SigmaDelta = np.cov(D, rowvar=False, bias=True).reshape(dC, dC)
    M = np.einsum("tik,kl,tjl->ij", Qs, SigmaDelta, Qs) / N
    gamma = np.zeros(d)
    gamma[iA] = vec(A)
    H = W + np.outer(gamma, gamma)
    s = np.linalg.svd(H, compute_uv=False)
    singular = bool(s[-1] <= rel_tol * s[0])
    Hp = pseudo_inverse(H, rel_tol)
    Xi2 = Hp @ M @ Hp.T
    Xi2 = 0.5 * (Xi2 + Xi2.T)
    return AsymptoticComponents(Gamma1, Gamma2, P1, P2, SigmaDelta, W, H, M, Xi2, singular)


def scalar_plugin_variances(series, coeffs: MinarCoefficients) -> np.ndarray:
    """Diagonal of ``Xi2`` for a 1 x 1 model: variances of ``(a, b, c)`` times ``T``."""
    return np.diag(asymptotic_cov_plugin(series, coeffs, 1, 1).Xi2)


def kron_rate_statistic(coeffs_hat: MinarCoefficients, coeffs_true: MinarCoefficients, T: int) -> float:
    """``sqrt(T) ||B_hat kron A_hat - B kron A||_F``."""
    return math.sqrt(T) * float(np.linalg.norm(kron(coeffs_hat.B, coeffs_hat.A) - kron(coeffs_true.B, coeffs_true.A)))
