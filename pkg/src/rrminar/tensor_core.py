"""Small dense-matrix primitives used throughout the package.

Matrices are plain ``numpy.ndarray`` objects (C order in memory).  ``vec``
always stacks *columns*, so ``vec(A @ Y @ B.T) == kron(B, A) @ vec(Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when matrix shapes do not conform."""


@dataclass(frozen=True)
class EigenResult:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def top(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, :k]


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stacked vectorisation."""
    M = np.asarray(M, dtype=float)
    return M.reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape vector of length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def _require_square(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue modulus, via the general (LAPACK geev) eigensolver."""
    M = _require_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def numerical_rank(M: np.ndarray, rel_tol: float = 1e-8) -> int:
    """Count singular values above ``rel_tol * sigma_max``."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def pseudo_inverse(M: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse, dropping singular values below ``rel_tol * sigma_max``."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.T.shape)
    keep = s > rel_tol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def symmetric_eigen(M: np.ndarray) -> EigenResult:
    """Eigendecomposition of ``(M + M.T) / 2``.

    Eigenvalues are sorted in descending order.  Each eigenvector is signed so
    that its largest-magnitude component (first one on ties) is nonnegative,
    which makes the output deterministic for simple spectra.
    """
    M = _require_square(M)
    S = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    if V.size:
        lead = np.argmax(np.abs(V), axis=0)
        signs = np.sign(V[lead, np.arange(V.shape[1])])
        signs[signs == 0] = 1.0
        V = V * signs
    return EigenResult(eigenvalues=w, eigenvectors=V)


def nkp_rearrange_project(Phi: np.ndarray, m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest Kronecker product ``Phi ~ kron(B, A)`` with ``A`` m x m, ``B`` n x n.

    Van Loan-Pitsianis: the n^2 x m^2 rearrangement of ``Phi`` whose rows are
    the flattened (n x n grid of) m x m blocks is rank one exactly when
    ``Phi`` is a Kronecker product; its dominant singular pair gives the
    factors.  ``A`` is returned with unit Frobenius norm and the shared sign
    is fixed so that ``A.sum() >= 0``.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != (m * n, m * n):
        raise DimensionError(f"Phi has shape {Phi.shape}, expected {(m * n, m * n)}")
    # blocks[j, i, l, k] = Phi[j*m + i, l*m + k] = B[j, l] * A[i, k]
    blocks = Phi.reshape(n, m, n, m)
    R = blocks.transpose(0, 2, 1, 3).reshape(n * n, m * m)
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    A = Vt[0].reshape(m, m)
    B = s[0] * U[:, 0].reshape(n, n)
    if A.sum() < 0:
        A, B = -A, -B
    return A, B
