"""One-step forecasts, the E1-E4 accuracy metrics and simulation error statistics."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .estimators import _frames
from .model import MinarCoefficients
from .tensor_core import DimensionError, kron

LOG_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class MetricsReport:
    e1: float
    e2: float
    e3: float
    e4: float
    horizon: int
    scope: str
    zero_denominator_substitutions: int
    residuals: np.ndarray | None = None

    def as_row(self) -> dict:
        return {
            "scope": self.scope,
            "horizon": self.horizon,
            "E1": self.e1,
            "E2": self.e2,
            "E3": self.e3,
            "E4": self.e4,
            "zero_denominator_substitutions": self.zero_denominator_substitutions,
        }


def one_step_forecast(coeffs: MinarCoefficients, X_now) -> np.ndarray:
    """Conditional mean ``A X_now B^T + C`` (real valued, not rounded)."""
    return coeffs.forecast(X_now)


def compute_metrics(actual, predicted, scope: str = "in_sample") -> MetricsReport:
    """E1-E4 over a window of frames, both arrays shaped ``(h, m, n)``.

    Zero denominators (an actual count of 0 in E3, a zero per-cell window
    mean in E4) are replaced by 1 and counted.
    """
    X = np.asarray(actual, dtype=float)
    F = np.asarray(predicted, dtype=float)
    if X.shape != F.shape or X.ndim != 3:
        raise DimensionError(f"actual {X.shape} and predicted {F.shape} must both be (h, m, n)")
    if X.shape[0] == 0:
        raise ValueError("empty evaluation window")
    R = X - F
    e1 = float(np.sum(np.sqrt(np.sum(R * R, axis=(1, 2)))))
    e2 = float(np.sqrt(np.mean(R * R)))
    zero3 = X == 0
    d3 = np.where(zero3, 1.0, X * X)
    e3 = float(np.sqrt(np.mean(R * R / d3)))
    xbar = X.mean(axis=0)
    zero4 = xbar == 0
    d4 = np.where(zero4, 1.0, xbar)
    e4 = float(np.mean(np.abs(R) / d4))
    subs = int(zero3.sum() + zero4.sum() * X.shape[0])
    return MetricsReport(e1, e2, e3, e4, X.shape[0], scope, subs, R)


def forecast_frames(model, series) -> np.ndarray:
    """Forecasts aligned with the series: row ``t`` predicts frame ``t``; rows before the model order are NaN."""
    X = _frames(series)
    p = model.order
    out = np.full(X.shape, np.nan)
    out[p:] = model.predict_frames(X)
    return out


def evaluate(series, model, split_at: int, start: int | None = None):
    """In-sample metrics on frames ``[start, split_at)`` and out-of-sample on ``[split_at, T)``.

    ``split_at`` is the number of training frames.  Every forecast conditions
    on observed frames, so the first out-of-sample forecast uses the last
    training frame.  ``start`` defaults to the model order (first frame with
    a forecast); pass a common value to compare models of different order.
    """
    X = _frames(series)
    T = X.shape[0]
    if not 2 <= split_at < T:
        raise ValueError(f"split_at must satisfy 2 <= split_at < T = {T}, got {split_at}")
    p = model.order
    start = p if start is None else start
    if not p <= start < split_at:
        raise ValueError(f"in-sample start {start} must lie in [{p}, {split_at})")
    F = forecast_frames(model, X)
    ins = compute_metrics(X[start:split_at], F[start:split_at], "in_sample")
    oos = compute_metrics(X[split_at:], F[split_at:], "out_of_sample")
    return ins, oos


def _log_sq(diff: np.ndarray, return_flag: bool):
    sq = float(np.sum(diff * diff))
    floored = sq <= 1e-300
    value = LOG_FLOOR if floored else math.log(sq)
    return (value, floored) if return_flag else value


def kron_error(A_hat, B_hat, A_true, B_true, return_flag: bool = False):
    """``log ||B_hat kron A_hat - B kron A||_F^2``, floored at ``log(1e-300)``."""
    return _log_sq(kron(B_hat, A_hat) - kron(B_true, A_true), return_flag)


def mginar_error(Phi_hat, A_true, B_true, return_flag: bool = False):
    """``log ||Phi_hat - B kron A||_F^2``, floored at ``log(1e-300)``."""
    target = kron(B_true, A_true)
    Phi_hat = np.asarray(Phi_hat, dtype=float)
    if Phi_hat.shape != target.shape:
        raise DimensionError(f"Phi has shape {Phi_hat.shape}, expected {target.shape}")
    return _log_sq(Phi_hat - target, return_flag)


def normalized_error_curve(results: Mapping) -> dict:
    """Map ``{key: [log errors]}`` to ``mean(exp(e)) / max`` over all keys."""
    if not results:
        raise ValueError("no results to normalise")
    means = {}
    for key, errs in results.items():
        errs = np.asarray(list(errs), dtype=float)
        if errs.size == 0:
            raise ValueError(f"no replications for {key!r}")
        means[key] = float(np.mean(np.exp(errs)))
    top = max(means.values())
    if not top > 0:
        raise ValueError("all mean errors are zero")
    return {key: v / top for key, v in means.items()}
