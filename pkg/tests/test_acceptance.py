"""Acceptance suite: twelve end-to-end criteria, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the status lines are
printed even when output capture is on.
"""

from __future__ import annotations

import math
import time
import warnings
from collections import defaultdict
from dataclasses import replace

import numpy as np
import pytest

from rrminar.comparison import compare_models
from rrminar.estimators import fit_minar_iclse, fit_rrminar_iclse
from rrminar.experiment_harness import bundled_plan, median_errors, normalized_curves, rank_success_table, run_plan
from rrminar.model import MinarCoefficients
from rrminar.tensor_core import kron, vec
from rrminar.theory_checks import innovation_cov_theoretical, innovations, scalar_plugin_variances
from rrminar.thinning_sim import gen_coefficients, make_rng, poisson_thin, simulate_minar

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def _report(number: int, title: str, ok: bool, detail: str, elapsed: float, limit: float):
        within = elapsed < limit
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {status} {title}: {detail} ({elapsed:.1f} s, limit {limit:.0f} s)")
        assert ok, detail
        assert within, f"runtime {elapsed:.1f} s exceeds {limit} s"

    return _report


def test_01_vec_kron_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m, n = rng.integers(1, 7, size=2)
        A, B = rng.standard_normal((m, m)), rng.standard_normal((n, n))
        Y = rng.standard_normal((m, n))
        worst = max(worst, float(np.max(np.abs(vec(A @ Y @ B.T) - kron(B, A) @ vec(Y)))))
    report(1, "vec/Kronecker identity", worst <= 1e-12, f"max abs deviation {worst:.2e}", time.perf_counter() - t0, 1)


def test_02_thinning_moments(report):
    t0 = time.perf_counter()
    N, lam = 100_000, 7.0
    x = poisson_thin(0.7, 10, make_rng(2), size=N)
    se_mean = math.sqrt(lam / N)
    se_var = math.sqrt((lam + 2 * lam * lam) / N)
    z_mean = abs(x.mean() - lam) / se_mean
    z_var = abs(x.var(ddof=1) - lam) / se_var
    ok = z_mean <= 4 and z_var <= 4
    report(2, "thinning moments", ok, f"mean z={z_mean:.2f}, variance z={z_var:.2f}", time.perf_counter() - t0, 5)


def test_03_innovation_covariance(report):
    t0 = time.perf_counter()
    A = np.array([[0.5, 0.2], [0.1, 0.4]])
    B = np.array([[0.8, 0.3], [0.2, 0.7]])
    C = np.array([[1.0, 2.0], [0.5, 1.5]])
    coeffs = MinarCoefficients(A, B, C)
    T = 50_000
    s = simulate_minar(coeffs, T, 500, make_rng(3))
    D = innovations(s, coeffs).transpose(0, 2, 1).reshape(T - 1, -1)
    Dc = D - D.mean(axis=0)
    S = Dc.T @ Dc / (T - 1)
    target = np.diag(innovation_cov_theoretical(coeffs))
    rel = np.abs(np.diag(S) - target) / target
    prods = Dc[:, :, None] * Dc[:, None, :]
    se = prods.std(axis=0) / math.sqrt(T - 1)
    off = ~np.eye(4, dtype=bool)
    z_off = np.abs(S[off]) / se[off]
    ok = rel.max() <= 0.10 and z_off.max() <= 3
    detail = f"max relative diagonal error {rel.max():.3f}, max off-diagonal z {z_off.max():.2f}"
    report(3, "innovation covariance", ok, detail, time.perf_counter() - t0, 30)


def test_04_objective_monotonicity(report):
    t0 = time.perf_counter()
    rng = make_rng(4)
    violations = 0
    for _ in range(50):
        m, n = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        k1, k2 = int(rng.integers(1, m + 1)), int(rng.integers(1, n + 1))
        c = gen_coefficients(m, n, k1, k2, rng)
        s = simulate_minar(c, 300, 100, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit_rrminar_iclse(s, k1, k2)
        f = res.objective_trace
        violations += int(np.sum(f[1:] > f[:-1] * (1 + 1e-8)))
    report(4, "objective monotonicity", violations == 0, f"{violations} increasing steps over 50 fits", time.perf_counter() - t0, 120)


def test_05_full_rank_equivalence(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = make_rng([5, seed])
        c = gen_coefficients(3, 2, 3, 2, rng)
        s = simulate_minar(c, 400, 100, rng)
        a = fit_minar_iclse(s).coefficients.kron()
        b = fit_rrminar_iclse(s, 3, 2).coefficients.kron()
        worst = max(worst, float(np.max(np.abs(a - b))))
    report(5, "full-rank equivalence", worst <= 1e-6, f"max |difference| {worst:.2e}", time.perf_counter() - t0, 60)


def _scalar_cls(x):
    y, z = x[1:].astype(float), x[:-1].astype(float)
    slope = np.sum((z - z.mean()) * (y - y.mean())) / np.sum((z - z.mean()) ** 2)
    return slope, y.mean() - slope * z.mean()


def test_06_scalar_oracle(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = make_rng([6, seed])
        a = rng.uniform(0.1, 0.8)
        c = MinarCoefficients(np.array([[1.0]]), np.array([[a]]), np.array([[rng.uniform(0.5, 5.0)]]))
        x = simulate_minar(c, 500, 100, rng).frames[:, 0, 0]
        slope, intercept = _scalar_cls(x)
        fit = fit_minar_iclse(x.reshape(-1, 1, 1).astype(float)).coefficients
        worst = max(worst, abs(fit.A[0, 0] * fit.B[0, 0] - slope), abs(fit.C[0, 0] - intercept))
    report(6, "scalar closed-form oracle", worst <= 1e-8, f"max deviation {worst:.2e}", time.perf_counter() - t0, 10)


def _ordering_by_T(table, key):
    """``{T: {model: value}}`` from ``{(.., model, T): value}``."""
    out = defaultdict(dict)
    for k, v in table.items():
        model, T = key(k)
        out[T][model] = v
    return dict(sorted(out.items()))


@pytest.mark.slow
def test_07_three_model_error_ordering(report):
    t0 = time.perf_counter()
    recs = run_plan(bundled_plan("figure2_desk"))
    med = _ordering_by_T(median_errors(recs), lambda k: (k[1], k[2]))
    ordered = all(v["RRMINAR"] < v["MINAR"] < v["MGINAR"] for v in med.values())
    Ts = list(med)
    decreasing = all(med[Ts[i + 1]][m] < med[Ts[i]][m] for m in ("RRMINAR", "MINAR", "MGINAR") for i in range(len(Ts) - 1))
    failures = sum(r.failed for r in recs)
    detail = "; ".join(f"T={T}: " + ", ".join(f"{m}={v[m]:.2f}" for m in ("RRMINAR", "MINAR", "MGINAR")) for T, v in med.items())
    report(7, "three-model ordering (6x4)", ordered and decreasing and failures == 0, detail, time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_08_normalized_curve_ordering(report):
    t0 = time.perf_counter()
    recs = run_plan(bundled_plan("figure3_desk"))
    (curve,) = normalized_curves(recs).values()
    by_T = _ordering_by_T(curve, lambda k: k)
    ordered = all(v["RRMINAR"] <= v["MINAR"] <= v["MGINAR"] for v in by_T.values())
    detail = "; ".join(f"T={T}: " + ", ".join(f"{m}={v[m]:.3g}" for m in ("RRMINAR", "MINAR", "MGINAR")) for T, v in by_T.items())
    report(8, "normalized error ordering", ordered and not any(r.failed for r in recs), detail, time.perf_counter() - t0, 900)


@pytest.mark.slow
def test_09_cp_success_band(report):
    t0 = time.perf_counter()
    plan = bundled_plan("table2_desk")
    plan = replace(plan, T_grid=(1000,))
    rows = rank_success_table(run_plan(plan))
    (row,) = rows
    ok = row["success_k1"] >= 0.75 and row["success_k2"] >= 0.75
    detail = f"success (k1, k2) = ({row['success_k1']:.2f}, {row['success_k2']:.2f}) over {row['replications']} replications, band >= 0.75"
    report(9, "Cp rank selection band", ok, detail, time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_10_root_t_rate(report):
    t0 = time.perf_counter()
    recs = run_plan(bundled_plan("rate_desk"))
    stats = defaultdict(list)
    for r in recs:
        if not r.failed:
            stats[r.T].append(math.sqrt(r.T) * math.sqrt(math.exp(r.error)))
    med = {T: float(np.median(v)) for T, v in sorted(stats.items())}
    ratio = max(med.values()) / min(med.values())
    detail = ", ".join(f"T={T}: {v:.3f}" for T, v in med.items()) + f"; max/min {ratio:.2f}"
    report(10, "root-T rate stability", ratio < 2.0, detail, time.perf_counter() - t0, 600)


def test_11_count_pipeline_structure(report):
    t0 = time.perf_counter()
    rng = make_rng(11)
    c = gen_coefficients(3, 3, 1, 1, rng, scheme="II")
    c = MinarCoefficients(c.A, c.B, 5.0 * c.C)
    s = simulate_minar(c, 415, 200, rng)
    cmp = compare_models(s, split_at=355)
    names = sorted(cmp.out_of_sample)
    finite = all(math.isfinite(v) for rep in cmp.out_of_sample.values() for v in (rep.e1, rep.e2, rep.e3, rep.e4))
    rows = cmp.metric_rows("out_of_sample")
    has_subs = all("zero_denominator_substitutions" in r for r in rows)
    e1_rr, e1_mg = cmp.out_of_sample["RRMINAR"].e1, cmp.out_of_sample["MGINAR"].e1
    ok = len(names) == 7 and finite and has_subs and e1_rr <= e1_mg and cmp.out_of_sample["RRMINAR"].horizon == 60
    detail = f"{len(names)} models, ranks {cmp.ranks}, out-of-sample E1 RRMINAR {e1_rr:.2f} vs MGINAR {e1_mg:.2f}"
    report(11, "seven-model comparison pipeline", ok, detail, time.perf_counter() - t0, 120)


@pytest.mark.slow
def test_12_scalar_plugin_variance(report):
    t0 = time.perf_counter()
    true = MinarCoefficients(np.array([[1.0]]), np.array([[0.5]]), np.array([[2.0]]))
    T = 2000
    b_hat, c_hat, plug = [], [], []
    for rep in range(200):
        s = simulate_minar(true, T, 200, make_rng(np.random.SeedSequence([12, rep])))
        fit = fit_minar_iclse(s).coefficients
        b_hat.append(fit.A[0, 0] * fit.B[0, 0])
        c_hat.append(fit.C[0, 0])
        plug.append(scalar_plugin_variances(s, fit))
    pred = np.median(plug, axis=0) / T
    ratios = np.array([np.var(b_hat, ddof=1) / pred[1], np.var(c_hat, ddof=1) / pred[2]])
    ok = bool(np.all((ratios > 0.5) & (ratios < 2.0)))
    detail = f"empirical/plug-in variance ratio b {ratios[0]:.2f}, c {ratios[1]:.2f}"
    report(12, "scalar plug-in covariance", ok, detail, time.perf_counter() - t0, 300)
