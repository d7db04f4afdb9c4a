"""Monte Carlo replication engine for the simulation studies.

Coefficients are drawn once per setting (from the setting's own seed) and
held fixed across replications.  Replication ``r`` of setting ``s`` draws its
innovations from ``SeedSequence([base_seed + r, s])``; one path of length
``max(T_grid)`` is simulated and its prefixes serve the shorter lengths.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .estimators import MODEL_NAMES, FitConfig, RankDeficiencyWarning, UnderdeterminedWarning, fit_model
from .eval_forecast import mginar_error, normalized_error_curve
from .model import MinarCoefficients
from .rank_select import select_rank
from .thinning_sim import SimulationSetting, gen_coefficients, make_rng, simulate_minar

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentPlan:
    settings: tuple
    models: tuple
    replications: int = 20
    T_grid: tuple = (300, 600, 1000)
    base_seed: int = 0
    rank_selection: bool = False
    config: FitConfig = field(default_factory=FitConfig)
    n_jobs: int = 1
    name: str = "plan"

    def __post_init__(self):
        if not self.models:
            raise ValueError("an experiment plan needs at least one model")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {MODEL_NAMES}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.settings:
            raise ValueError("an experiment plan needs at least one setting")
        if not self.T_grid or min(self.T_grid) < 2:
            raise ValueError("T_grid must hold lengths >= 2")
        for s in self.settings:
            if not isinstance(s, SimulationSetting):
                raise TypeError("settings must be SimulationSetting instances")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        T_grid = tuple(int(t) for t in d.get("T_grid", (300, 600, 1000)))
        if not T_grid:
            raise ValueError("T_grid must not be empty")
        base_seed = int(d.get("base_seed", 0))
        settings = []
        for i, s in enumerate(d.get("settings", [])):
            settings.append(
                SimulationSetting(
                    scheme=str(s.get("scheme", "I")),
                    m=int(s["m"]),
                    n=int(s["n"]),
                    k1=int(s["k1"]),
                    k2=int(s["k2"]),
                    T=max(T_grid),
                    burn_in=int(s.get("burn_in", 200)),
                    seed=int(s.get("seed", base_seed + 7919 * (i + 1))),
                )
            )
        cfg = d.get("config", {})
        delta_rule = cfg.get("delta_rule", "inv_t")
        config = FitConfig.from_delta_rule(
            delta_rule,
            max_iterations=int(cfg.get("max_iterations", 2000)),
            negative_correction=cfg.get("negative_correction", "none"),
        )
        return cls(
            settings=tuple(settings),
            models=tuple(d.get("models", ())),
            replications=int(d.get("replications", 20)),
            T_grid=T_grid,
            base_seed=base_seed,
            rank_selection=bool(d.get("rank_selection", False)),
            config=config,
            n_jobs=int(d.get("n_jobs", 1)),
            name=str(d.get("name", "plan")),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        return cls.from_dict(json.loads(text))


def bundled_plan(name: str) -> ExperimentPlan:
    """Load one of the plans shipped in ``rrminar/plans``."""
    if not name.endswith(".json"):
        name += ".json"
    text = resources.files("rrminar").joinpath("plans", name).read_text(encoding="utf-8")
    return ExperimentPlan.from_json(text)


@dataclass
class ReplicationRecord:
    setting: str
    model: str
    T: int
    replication: int
    error: float
    wall_time: float
    converged: bool
    true_k1: int
    true_k2: int
    selected_k1: int | None = None
    selected_k2: int | None = None
    failed: bool = False
    message: str = ""


RECORD_FIELDS = list(ReplicationRecord.__dataclass_fields__)


def setting_coefficients(setting: SimulationSetting) -> MinarCoefficients:
    return gen_coefficients(setting.m, setting.n, setting.k1, setting.k2, make_rng(setting.seed), scheme=setting.scheme)


def _run_replication(plan: ExperimentPlan, s_idx: int, rep: int, coeffs: MinarCoefficients) -> list[ReplicationRecord]:
    setting = plan.settings[s_idx]
    rng = make_rng(np.random.SeedSequence([plan.base_seed + rep, s_idx]))
    path = simulate_minar(coeffs, max(plan.T_grid), setting.burn_in, rng).frames
    records = []
    for T in sorted(plan.T_grid):
        X = path[:T]
        selected = None
        if plan.rank_selection:
            try:
                selected = select_rank(X, plan.config).selected
            except Exception as exc:  # recorded, not fatal
                log.warning("rank selection failed for %s T=%d rep=%d: %s", setting.label, T, rep, exc)
        for model in plan.models:
            start = time.perf_counter()
            base = dict(
                setting=setting.label,
                model=model,
                T=T,
                replication=rep,
                true_k1=setting.k1,
                true_k2=setting.k2,
                selected_k1=None if selected is None else selected[0],
                selected_k2=None if selected is None else selected[1],
            )
            try:
                ranks = selected if (model == "RRMINAR" and selected is not None) else (setting.k1, setting.k2)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RankDeficiencyWarning)
                    warnings.simplefilter("ignore", UnderdeterminedWarning)
                    fitted = fit_model(model, X, plan.config, ranks)
                err = mginar_error(fitted.kron(), coeffs.A, coeffs.B)
                records.append(
                    ReplicationRecord(
                        error=err,
                        wall_time=time.perf_counter() - start,
                        converged=bool(fitted.info.get("converged", True)),
                        **base,
                    )
                )
            except Exception as exc:  # recorded, not fatal
                records.append(
                    ReplicationRecord(
                        error=math.nan,
                        wall_time=time.perf_counter() - start,
                        converged=False,
                        failed=True,
                        message=f"{type(exc).__name__}: {exc}",
                        **base,
                    )
                )
    return records


def run_plan(plan: ExperimentPlan) -> list[ReplicationRecord]:
    """Fit every model on every (setting, T, replication); deterministic given the plan."""
    tasks = []
    for s_idx, setting in enumerate(plan.settings):
        coeffs = setting_coefficients(setting)
        tasks.extend((s_idx, rep, coeffs) for rep in range(plan.replications))
    if plan.n_jobs == 1:
        chunks = [_run_replication(plan, *t) for t in tasks]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=plan.n_jobs)(delayed(_run_replication)(plan, *t) for t in tasks)
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.setting, r.T, r.model, r.replication))
    return records


def median_errors(records) -> dict:
    """``{(setting, model, T): median error}`` over non-failed records."""
    groups = defaultdict(list)
    for r in records:
        if not r.failed:
            groups[(r.setting, r.model, r.T)].append(r.error)
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}


def normalized_curves(records) -> dict:
    """Per setting, ``{(model, T): normalised mean exp(error)}``."""
    by_setting = defaultdict(lambda: defaultdict(list))
    for r in records:
        if not r.failed:
            by_setting[r.setting][(r.model, r.T)].append(r.error)
    return {s: normalized_error_curve(dict(sorted(g.items()))) for s, g in sorted(by_setting.items())}


def rank_success_table(records) -> list[dict]:
    """Share of replications whose selected ``k1`` (resp. ``k2``) equals the truth."""
    seen = {}
    for r in records:
        if r.selected_k1 is None:
            continue
        seen[(r.setting, r.T, r.replication)] = r
    groups = defaultdict(list)
    for (setting, T, _), r in seen.items():
        groups[(setting, T, r.true_k1, r.true_k2)].append(r)
    rows = []
    for (setting, T, k1, k2), rs in sorted(groups.items()):
        rows.append(
            {
                "setting": setting,
                "T": T,
                "true_k1": k1,
                "true_k2": k2,
                "success_k1": float(np.mean([r.selected_k1 == k1 for r in rs])),
                "success_k2": float(np.mean([r.selected_k2 == k2 for r in rs])),
                "replications": len(rs),
            }
        )
    return rows


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(asdict(r))
    return buf.getvalue()
