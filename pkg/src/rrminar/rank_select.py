"""Rank selection with Mallows' Cp averaged over contiguous time segments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    FitConfig,
    InsufficientDataError,
    RankDeficiencyWarning,
    _frames,
    fit_minar_iclse,
    fit_rrminar_iclse,
    objective_value,
    projection_init,
)

N_SEGMENTS = 3


@dataclass
class CpReport:
    grid: dict  # (k1, k2) -> {"segments": [cp, ...], "mean": cp}
    selected: tuple[int, int]
    sigma2_full: list[float]
    segment_bounds: list[tuple[int, int]]
    exact_fit: bool = False
    rss: dict = field(default_factory=dict)

    def rows(self):
        for (k1, k2), entry in sorted(self.grid.items()):
            yield {"k1": k1, "k2": k2, "mean_cp": entry["mean"], **{f"cp_seg{i}": v for i, v in enumerate(entry["segments"])}}


def parameter_count(m: int, n: int, k1: int, k2: int) -> int:
    """Free parameters of the rank-(k1, k2) model including the mn intercepts."""
    return m * m + n * n - (m - k1) ** 2 - (n - k2) ** 2 + m * n


def cp_score(rss_sub: float, sigma2_full: float, n_obs: int, k_params: int) -> float:
    """Mallows' ``RSS / sigma^2 - (n - 2k)``."""
    if not sigma2_full > 0:
        raise ValueError("sigma2_full must be positive")
    if n_obs <= 0:
        raise ValueError("n_obs must be positive")
    return rss_sub / sigma2_full - (n_obs - 2 * k_params)


def min_segment_length(m: int, n: int) -> int:
    """Shortest segment supporting the projection start and a positive residual degree of freedom."""
    mn = m * n
    p_full = m * m + n * n + mn
    return max(mn + 2, p_full // mn + 2)


def segment_bounds(T: int, n_segments: int = N_SEGMENTS) -> list[tuple[int, int]]:
    edges = np.cumsum([0] + [len(a) for a in np.array_split(np.arange(T), n_segments)])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _tie_key(item):
    (k1, k2), mean_cp = item
    return (mean_cp, k1 + k2, k1)


OBS_UNITS = ("cell", "frame")


def select_rank(
    series, config: FitConfig | None = None, n_segments: int = N_SEGMENTS, obs_unit: str = "cell"
) -> CpReport:
    """Choose ``(k1, k2)`` minimising the segment-averaged Cp.

    On each segment the unconstrained model supplies ``sigma^2 = RSS_full /
    (n_obs - p_full)`` with ``n_obs = (T_seg - 1) m n``.  Ties go to the
    smaller ``k1 + k2``, then the smaller ``k1``.  When the full model fits
    a segment exactly, Cp is undefined; that segment then scores exact
    fits by ``2k`` minus ``n_obs`` and everything else as ``+inf``, so the
    most parsimonious exact fit wins.
    """
    if obs_unit not in OBS_UNITS:
        raise ValueError(f"obs_unit must be one of {OBS_UNITS}")
    config = config or FitConfig()
    X = _frames(series)
    T, m, n = X.shape
    need = min_segment_length(m, n)
    bounds = segment_bounds(T, n_segments)
    if min(b - a for a, b in bounds) < need:
        raise InsufficientDataError(
            f"rank selection on a {m}x{n} series needs T >= {need * n_segments} "
            f"({n_segments} segments of at least {need} frames); got T = {T}"
        )
    mn = m * n
    p_full = m * m + n * n + mn
    pairs = [(k1, k2) for k1 in range(1, m + 1) for k2 in range(1, n + 1)]
    grid = {pair: {"segments": [], "mean": math.nan} for pair in pairs}
    rss_table = {pair: [] for pair in pairs}
    sigma2s = []
    exact_any = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        for a, b in bounds:
            seg = X[a:b]
            n_obs = (b - a - 1) * (mn if obs_unit == "cell" else 1)
            init = projection_init(seg, config.rel_tol)
            full = fit_minar_iclse(seg, init=init, config=config)
            c = full.raw_coefficients
            rss_full = objective_value(seg, c.A, c.B, c.C)
            tss = float(np.sum((seg[1:] - seg[1:].mean(axis=0)) ** 2))
            scale = max(tss, 1.0)
            sigma2 = rss_full / (n_obs - p_full)
            exact = rss_full <= 1e-12 * scale
            exact_any |= exact
            sigma2s.append(sigma2)
            for k1, k2 in pairs:
                if (k1, k2) == (m, n):
                    rss = rss_full
                else:
                    fit = fit_rrminar_iclse(seg, k1, k2, init=init, config=config)
                    r = fit.raw_coefficients
                    rss = objective_value(seg, r.A, r.B, r.C)
                rss_table[(k1, k2)].append(rss)
                k = parameter_count(m, n, k1, k2)
                if exact:
                    cp = (2 * k - n_obs) if rss <= 1e-12 * scale else math.inf
                else:
                    cp = cp_score(rss, sigma2, n_obs, k)
                grid[(k1, k2)]["segments"].append(cp)
    for pair in pairs:
        grid[pair]["mean"] = float(np.mean(grid[pair]["segments"]))
    selected = min(((pair, grid[pair]["mean"]) for pair in pairs), key=_tie_key)[0]
    return CpReport(grid, selected, sigma2s, bounds, exact_any, rss_table)
