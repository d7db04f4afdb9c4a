"""Train/test comparison of the seven forecasting models on one count matrix series."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimators import MODEL_NAMES, FitConfig, RankDeficiencyWarning, UnderdeterminedWarning, _frames, fit_model
from .eval_forecast import MetricsReport, evaluate, forecast_frames
from .rank_select import CpReport, select_rank

DEFAULT_TEST_FRAMES = 60


@dataclass
class ModelComparison:
    split_at: int
    ranks: tuple[int, int]
    in_sample: dict[str, MetricsReport]
    out_of_sample: dict[str, MetricsReport]
    fitted: dict = field(repr=False, default_factory=dict)
    forecasts: dict = field(repr=False, default_factory=dict)
    rank_report: CpReport | None = None

    def metric_rows(self, scope: str) -> list[dict]:
        table = self.in_sample if scope == "in_sample" else self.out_of_sample
        return [{"model": name, **table[name].as_row()} for name in table]


def default_split(T: int, test_frames: int = DEFAULT_TEST_FRAMES) -> int:
    split = T - test_frames
    if split < 2:
        raise ValueError(f"series of length {T} is too short to hold out {test_frames} test frames")
    return split


def compare_models(
    series,
    split_at: int | None = None,
    config: FitConfig | None = None,
    ranks: tuple[int, int] | str = "auto",
    models=MODEL_NAMES,
) -> ModelComparison:
    """Fit each model on frames ``[0, split_at)`` and score one-step forecasts.

    In-sample metrics start at frame 2 for every model so that first- and
    second-order models are scored on the same frames.  Negative estimates
    are corrected with absolute values unless ``config`` says otherwise.
    """
    config = config or FitConfig(negative_correction="absolute")
    X = _frames(series)
    T = X.shape[0]
    split_at = default_split(T) if split_at is None else split_at
    if not 3 <= split_at < T:
        raise ValueError(f"split_at must lie in [3, {T}), got {split_at}")
    train = X[:split_at]
    rank_report = None
    if ranks == "auto":
        rank_report = select_rank(train, config)
        ranks = rank_report.selected
    ranks = tuple(int(k) for k in ranks)
    start = max(2, max(2 if m == "iINAR2" else 1 for m in models))
    ins, oos, fitted, forecasts = {}, {}, {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        warnings.simplefilter("ignore", UnderdeterminedWarning)
        for name in models:
            model = fit_model(name, train, config, ranks)
            fitted[name] = model
            ins[name], oos[name] = evaluate(X, model, split_at, start=start)
            forecasts[name] = forecast_frames(model, X)
    return ModelComparison(split_at, ranks, ins, oos, fitted, forecasts, rank_report)


def forecast_rows(comparison: ModelComparison, series) -> list[tuple]:
    """Long rows ``(model, t, i, j, actual, forecast)`` for plotting."""
    X = _frames(series)
    rows = []
    for name, F in comparison.forecasts.items():
        T, m, n = F.shape
        for t in range(T):
            if np.isnan(F[t, 0, 0]):
                continue
            for i in range(m):
                for j in range(n):
                    rows.append((name, t, i, j, int(X[t, i, j]), float(F[t, i, j])))
    return rows
