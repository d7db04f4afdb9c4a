"""Core value types: count matrix series and MINAR coefficient triples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DimensionError, kron, numerical_rank, spectral_radius

NEGATIVE_CORRECTIONS = ("none", "absolute", "clamp_zero")


class DomainError(ValueError):
    """Raised for negative rates, negative counts and similar domain violations."""


class StationarityError(ValueError):
    """Raised when rho(A) * rho(B) >= 1 where a stationary model is required."""


@dataclass(frozen=True)
class CountMatrixSeries:
    """``T`` consecutive ``m x n`` count matrices stored as a ``(T, m, n)`` int64 array."""

    frames: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise DimensionError(f"frames must be a (T, m, n) array, got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise DimensionError("a series needs at least one frame")
        if not np.issubdtype(frames.dtype, np.integer):
            rounded = np.rint(frames)
            if not np.all(np.isfinite(frames)) or not np.array_equal(rounded, frames):
                raise DomainError("count series must contain integers")
            frames = rounded
        frames = frames.astype(np.int64)
        if np.any(frames < 0):
            raise DomainError("count series must be nonnegative")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def m(self) -> int:
        return self.frames.shape[1]

    @property
    def n(self) -> int:
        return self.frames.shape[2]

    def segment(self, start: int, stop: int) -> "CountMatrixSeries":
        return CountMatrixSeries(self.frames[start:stop], self.labels)

    def transpose(self) -> "CountMatrixSeries":
        labels = None if self.labels is None else (self.labels[1], self.labels[0])
        return CountMatrixSeries(self.frames.transpose(0, 2, 1), labels)

    def as_float(self) -> np.ndarray:
        return self.frames.astype(float)


def correct_negatives(M: np.ndarray, mode: str) -> np.ndarray:
    if mode not in NEGATIVE_CORRECTIONS:
        raise ValueError(f"unknown negative correction {mode!r}; choose from {NEGATIVE_CORRECTIONS}")
    M = np.asarray(M, dtype=float)
    if mode == "absolute":
        return np.abs(M)
    if mode == "clamp_zero":
        return np.maximum(M, 0.0)
    return M.copy()


@dataclass(frozen=True)
class MinarCoefficients:
    """The triple ``(A, B, C)`` of ``X_t = A X_{t-1} B^T + C + noise``.

    ``k1``/``k2`` are the declared ranks; when omitted they are taken as the
    numerical ranks of ``A`` and ``B``.  Estimated coefficients may have
    negative entries, so nonnegativity is checked only where it matters
    (simulation) via :meth:`require_thinning_parameters`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    k1: int | None = None
    k2: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionError(f"B must be square, got {B.shape}")
        if C.shape != (A.shape[0], B.shape[0]):
            raise DimensionError(f"C has shape {C.shape}, expected {(A.shape[0], B.shape[0])}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
            M.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if self.k1 is None:
            object.__setattr__(self, "k1", numerical_rank(A))
        if self.k2 is None:
            object.__setattr__(self, "k2", numerical_rank(B))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def order(self) -> int:
        return 1

    def kron(self) -> np.ndarray:
        """``B kron A``, the coefficient of the vectorised recursion."""
        return kron(self.B, self.A)

    @property
    def spectral_product(self) -> float:
        return spectral_radius(self.A) * spectral_radius(self.B)

    @property
    def is_stationary(self) -> bool:
        return self.spectral_product < 1.0

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.A >= 0) and np.all(self.B >= 0) and np.all(self.C >= 0))

    @property
    def parameter_count(self) -> int:
        m, n = self.m, self.n
        return m * m + n * n - (m - self.k1) ** 2 - (n - self.k2) ** 2 + m * n

    def normalized(self) -> "MinarCoefficients":
        """Rescale so ``||A||_F = 1`` with ``A.sum() >= 0``; ``B kron A`` is unchanged."""
        s = np.linalg.norm(self.A)
        if s == 0.0:
            return self
        if self.A.sum() < 0:
            s = -s
        return MinarCoefficients(self.A / s, self.B * s, self.C, self.k1, self.k2, dict(self.meta))

    def corrected(self, mode: str) -> "MinarCoefficients":
        return MinarCoefficients(
            correct_negatives(self.A, mode),
            correct_negatives(self.B, mode),
            correct_negatives(self.C, mode),
            self.k1,
            self.k2,
            dict(self.meta),
        )

    def require_thinning_parameters(self) -> None:
        if not self.is_nonnegative:
            raise DomainError("thinning parameters A, B and rates C must be nonnegative")

    def require_stationary(self) -> None:
        rho = self.spectral_product
        if not rho < 1.0:
            raise StationarityError(f"rho(A) * rho(B) = {rho:.6g} is not below 1")

    def forecast(self, X_now: np.ndarray) -> np.ndarray:
        X_now = np.asarray(X_now, dtype=float)
        if X_now.shape != (self.m, self.n):
            raise DimensionError(f"state has shape {X_now.shape}, expected {(self.m, self.n)}")
        return self.A @ X_now @ self.B.T + self.C

    def predict_frames(self, frames: np.ndarray) -> np.ndarray:
        """One-step forecasts for ``frames[1:]`` given ``frames[:-1]``."""
        X = np.asarray(frames, dtype=float)
        return self.A @ X[:-1] @ self.B.T + self.C

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "k1": int(self.k1),
            "k2": int(self.k2),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinarCoefficients":
        return cls(np.array(d["A"]), np.array(d["B"]), np.array(d["C"]), d.get("k1"), d.get("k2"))
