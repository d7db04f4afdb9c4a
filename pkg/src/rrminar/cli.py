"""Command-line interface: ``rrminar {simulate,fit,select-rank,evaluate,experiment,crime}``.

Log verbosity comes from the ``RRMINAR_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING`` ...; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import DEFAULT_TEST_FRAMES, compare_models, default_split, forecast_rows
from .estimators import (
    FitConfig,
    MginarModel,
    RankDeficiencyWarning,
    UnderdeterminedWarning,
    fit_model,
)
from .eval_forecast import evaluate
from .experiment_harness import (
    ExperimentPlan,
    bundled_plan,
    median_errors,
    normalized_curves,
    rank_success_table,
    records_to_csv,
    run_plan,
)
from .io_formats import (
    IngestionError,
    _csv_text,
    atomic_write_text,
    coefficient_from_csv,
    coefficient_to_csv,
    load_order_file,
    pivot_long_format,
    series_from_csv,
    series_to_csv,
    write_json,
)
from .model import NEGATIVE_CORRECTIONS, MinarCoefficients
from .rank_select import select_rank
from .thinning_sim import RNG_ALGORITHM, SCHEMES, SimulationSetting, gen_coefficients, make_rng, simulate_minar

log = logging.getLogger("rrminar")

CLI_MODELS = {
    "mginar": "MGINAR",
    "minar": "MINAR",
    "rrminar": "RRMINAR",
    "iinar1": "iINAR1",
    "iinar2": "iINAR2",
    "mginar_row": "MGINAR_row",
    "mginar_col": "MGINAR_col",
}


class CliError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("RRMINAR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def _parse_rank(text: str):
    if text == "auto":
        return "auto"
    try:
        k1, k2 = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--rank must be 'auto' or 'k1,k2', got {text!r}") from exc
    return (k1, k2)


def _parse_delta_rule(text: str) -> str:
    try:
        FitConfig.from_delta_rule(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def _add_common(p: argparse.ArgumentParser, fitting: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="base random seed")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs")
    if fitting:
        p.add_argument("--delta-rule", type=_parse_delta_rule, default="inv_t", help="inv_t or fixed:<x>")
        p.add_argument("--negative-correction", choices=NEGATIVE_CORRECTIONS, default=None)
        p.add_argument("--rank", type=_parse_rank, default="auto", help="auto or k1,k2")
        p.add_argument("--max-iter", type=int, default=2000)


def _config(args, default_correction: str = "none") -> FitConfig:
    if args.max_iter < 1:
        raise CliError("--max-iter must be at least 1")
    correction = args.negative_correction or default_correction
    return FitConfig.from_delta_rule(args.delta_rule, max_iterations=args.max_iter, negative_correction=correction)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rrminar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a MINAR(1) series with random low-rank coefficients")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k1", type=int, required=True)
    p.add_argument("--k2", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--setting", choices=SCHEMES, default="I")
    p.add_argument("--burn-in", type=int, default=200)
    _add_common(p, fitting=False)

    p = sub.add_parser("fit", help="fit a model to a series CSV")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--model", choices=sorted(CLI_MODELS), required=True)
    _add_common(p)

    p = sub.add_parser("select-rank", help="Cp rank selection on a series CSV")
    p.add_argument("--input", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("evaluate", help="E1-E4 metrics for coefficients A.csv, B.csv, C.csv")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--coefficients", type=Path, required=True, help="directory holding A.csv, B.csv, C.csv")
    p.add_argument("--split-at", type=int, default=None, help="number of training frames")
    _add_common(p, fitting=False)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment plan")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--plan", type=Path, help="plan JSON file")
    g.add_argument("--bundled", help="name of a bundled plan, e.g. figure2_desk")
    p.add_argument("--replications", type=int, default=None, help="override the plan's replication count")
    p.add_argument("--n-jobs", type=int, default=None)
    _add_common(p, fitting=False)

    p = sub.add_parser("crime", help="seven-model comparison on long-format count data")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--order", default="lexicographic", help="lexicographic, bundled, or a path to an order JSON")
    p.add_argument("--split-at", type=int, default=None)
    p.add_argument("--test-frames", type=int, default=DEFAULT_TEST_FRAMES)
    p.add_argument("--max-fill-fraction", type=float, default=0.5)
    _add_common(p)
    return parser


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _write_coefficients(out: Path, coeffs: MinarCoefficients) -> None:
    for name in ("A", "B", "C"):
        atomic_write_text(out / f"{name}.csv", coefficient_to_csv(getattr(coeffs, name)))


def cmd_simulate(args) -> None:
    try:
        setting = SimulationSetting(args.setting, args.m, args.n, args.k1, args.k2, args.T, args.burn_in, args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    ss = np.random.SeedSequence(args.seed)
    coef_seed, path_seed = ss.spawn(2)
    coeffs = gen_coefficients(args.m, args.n, args.k1, args.k2, make_rng(coef_seed), scheme=args.setting)
    series = simulate_minar(coeffs, args.T, args.burn_in, make_rng(path_seed))
    out = args.out_dir
    atomic_write_text(out / "series.csv", series_to_csv(series))
    _write_coefficients(out, coeffs)
    write_json(
        out / "simulation.json",
        {
            "setting": {
                "scheme": setting.scheme,
                "m": setting.m,
                "n": setting.n,
                "k1": setting.k1,
                "k2": setting.k2,
                "T": setting.T,
                "burn_in": setting.burn_in,
            },
            "seed": args.seed,
            "rng": RNG_ALGORITHM,
            "coefficients": coeffs.to_dict(),
            "spectral_product": coeffs.spectral_product,
        },
    )


def cmd_fit(args) -> None:
    series = series_from_csv(_read(args.input))
    model = CLI_MODELS[args.model]
    config = _config(args)
    out = args.out_dir
    report = {"model": model, "input": str(args.input), "T": series.T, "m": series.m, "n": series.n}
    ranks = None
    if model == "RRMINAR":
        if args.rank == "auto":
            cp = select_rank(series, config)
            ranks = cp.selected
            report["rank_selection"] = {"selected": list(ranks), "mean_cp": {f"{k1},{k2}": v["mean"] for (k1, k2), v in cp.grid.items()}}
        else:
            ranks = args.rank
            if not (1 <= ranks[0] <= series.m and 1 <= ranks[1] <= series.n):
                raise CliError(f"rank {ranks} out of bounds for a {series.m}x{series.n} series")
        report["ranks"] = list(ranks)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnderdeterminedWarning)
        warnings.simplefilter("always", RankDeficiencyWarning)
        fitted = fit_model(model, series, config, ranks)
    report["warnings"] = sorted({str(w.message) for w in caught})
    for msg in report["warnings"]:
        log.warning("%s", msg)
    f = fitted.forecaster
    if isinstance(f, MginarModel):
        atomic_write_text(out / "Phi.csv", coefficient_to_csv(f.Phi))
        atomic_write_text(out / "c.csv", coefficient_to_csv(f.c[:, None]))
    elif model in ("iINAR1", "iINAR2"):
        for k in range(f.order):
            atomic_write_text(out / f"alpha{k + 1}.csv", coefficient_to_csv(f.alphas[:, :, k]))
        atomic_write_text(out / "lambda.csv", coefficient_to_csv(f.intercepts))
    else:
        _write_coefficients(out, f.coefficients)
        atomic_write_text(
            out / "objective_trace.csv",
            _csv_text(["iteration", "objective"], [(i, repr(float(v))) for i, v in enumerate(f.objective_trace)]),
        )
        report.update(
            iterations=f.iterations,
            converged=f.converged,
            stop_delta=f.stop_delta,
            negatives_corrected=f.negatives_corrected,
            objective=float(f.objective_trace.min()),
        )
    write_json(out / "fit.json", report)


def cmd_select_rank(args) -> None:
    series = series_from_csv(_read(args.input))
    cp = select_rank(series, _config(args))
    rows = [list(r.values()) for r in cp.rows()]
    header = list(next(cp.rows()).keys())
    atomic_write_text(args.out_dir / "cp_grid.csv", _csv_text(header, rows))
    write_json(
        args.out_dir / "rank.json",
        {
            "selected": list(cp.selected),
            "sigma2_full": cp.sigma2_full,
            "segment_bounds": [list(b) for b in cp.segment_bounds],
            "exact_fit": cp.exact_fit,
        },
    )


def cmd_evaluate(args) -> None:
    series = series_from_csv(_read(args.input))
    d = args.coefficients
    coeffs = MinarCoefficients(*(coefficient_from_csv(_read(d / f"{k}.csv")) for k in ("A", "B", "C")))
    if (coeffs.m, coeffs.n) != (series.m, series.n):
        raise CliError("coefficient dimensions do not match the series")
    split = default_split(series.T) if args.split_at is None else args.split_at
    ins, oos = evaluate(series, coeffs, split)
    rows = [list(r.as_row().values()) for r in (ins, oos)]
    atomic_write_text(args.out_dir / "metrics.csv", _csv_text(list(ins.as_row().keys()), rows))
    write_json(args.out_dir / "evaluation.json", {"split_at": split, "in_sample": ins.as_row(), "out_of_sample": oos.as_row()})


def cmd_experiment(args) -> None:
    if args.plan is not None:
        plan = ExperimentPlan.from_json(_read(args.plan))
    else:
        plan = bundled_plan(args.bundled)
    overrides = {}
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.n_jobs is not None:
        overrides["n_jobs"] = args.n_jobs
    if overrides:
        from dataclasses import replace

        plan = replace(plan, **overrides)
    records = run_plan(plan)
    out = args.out_dir
    atomic_write_text(out / "records.csv", records_to_csv(records))
    med = median_errors(records)
    atomic_write_text(
        out / "median_errors.csv",
        _csv_text(["setting", "model", "T", "median_error"], [(*k, v) for k, v in med.items()]),
    )
    curves = normalized_curves(records)
    atomic_write_text(
        out / "normalized_curves.csv",
        _csv_text(
            ["setting", "model", "T", "normalized_error"],
            [(s, m, T, v) for s, c in curves.items() for (m, T), v in c.items()],
        ),
    )
    table = rank_success_table(records)
    if table:
        atomic_write_text(out / "rank_success.csv", _csv_text(list(table[0].keys()), [list(r.values()) for r in table]))
    write_json(
        out / "experiment.json",
        {
            "plan": plan.name,
            "models": list(plan.models),
            "T_grid": list(plan.T_grid),
            "replications": plan.replications,
            "base_seed": plan.base_seed,
            "records": len(records),
            "failures": sum(r.failed for r in records),
        },
    )


def cmd_crime(args) -> None:
    if args.order == "lexicographic":
        order = None
    elif args.order == "bundled":
        order = load_order_file()
    else:
        order = load_order_file(args.order)
    data = pivot_long_format(_read(args.input), order, args.max_fill_fraction)
    series = data.series
    split = args.split_at
    if split is None:
        split = default_split(series.T, args.test_frames)
    if not 3 <= split < series.T:
        raise CliError(f"split index {split} is out of range for {series.T} frames")
    cmp = compare_models(series, split, _config(args, "absolute"), args.rank)
    out = args.out_dir
    for scope in ("in_sample", "out_of_sample"):
        rows = cmp.metric_rows(scope)
        atomic_write_text(out / f"metrics_{scope}.csv", _csv_text(list(rows[0].keys()), [list(r.values()) for r in rows]))
    atomic_write_text(
        out / "forecasts.csv",
        _csv_text(["model", "t", "i", "j", "actual", "forecast"], forecast_rows(cmp, series)),
    )
    write_json(
        out / "crime.json",
        {
            "row_labels": data.row_labels,
            "col_labels": data.col_labels,
            "first_date": data.dates[0].isoformat(),
            "last_date": data.dates[-1].isoformat(),
            "frames": series.T,
            "split_at": split,
            "zero_filled_cells": data.filled,
            "ranks": list(cmp.ranks),
            "zero_denominator_substitutions": {
                name: {"in_sample": cmp.in_sample[name].zero_denominator_substitutions, "out_of_sample": rep.zero_denominator_substitutions}
                for name, rep in cmp.out_of_sample.items()
            },
        },
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select-rank": cmd_select_rank,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "crime": cmd_crime,
}


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CliError, IngestionError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"rrminar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
