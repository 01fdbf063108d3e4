"""Acceptance checks, one test per numbered criterion.

Each test prints ``criterion N: PASS|FAIL ...`` and asserts the same
condition, including the stated runtime budget where there is one.
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest
from scipy.special import gamma

from tailcast.backtest import BacktestConfig, run_backtest, write_report
from tailcast.linear import (
    ar_to_ma,
    companion_power,
    farima_ma_coeffs,
    fit_ar_lad,
    invert_coeffs,
    yule_walker,
)
from tailcast.metrics import (
    ConfusionCounts,
    joint_probabilities,
    population_metrics,
    sample_metrics,
    tally_arrays,
)
from tailcast.predictors import ar_predictor, predict_arrays
from tailcast.series import EmpiricalDistribution, generalized_inverse
from tailcast.simulate import InnovationSpec, SimConfig, draw_innovations, make_rng, simulate_ar, simulate_farima
from tailcast.taildep import (
    RegVarSpec,
    empirical_conditional_exceedance,
    farima_lambda_grid,
    lambda_opt_ar1,
    lambda_opt_ma,
    oracle_bounds,
    tail_dependence,
)

PHI5 = np.array([0.3, 0.19, -0.035, -0.01, 0.0025])


def _quantile(x, p):
    return generalized_inverse(EmpiricalDistribution(np.sort(x)), p)


def test_criterion_01_ar1_closed_form(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for phi in (0.5, -0.5):
        a = ar_to_ma([phi], 1000)
        for alpha in (1.0, 1.5):
            for p in (0.5, 1.0):
                spec = RegVarSpec(alpha, p)
                for h in (1, 2, 3):
                    worst = max(worst, abs(lambda_opt_ar1(phi, spec, h) - lambda_opt_ma(spec, a, h)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 1.0
    assert criterion(1, ok, f"max |closed - series| = {worst:.2e} (< 1e-6), {dt:.3f}s (< 1s)")


def test_criterion_02_ar1_pareto_monte_carlo(criterion):
    t0 = time.perf_counter()
    n = 10_000_000
    y = simulate_ar([0.5], InnovationSpec("pareto", 1.0), SimConfig(n, seed=2024)).values
    emp = empirical_conditional_exceedance(y[1:], y[:-1], 0.999)
    theory = lambda_opt_ar1(0.5, RegVarSpec(1.0, 1.0), 1)
    dt = time.perf_counter() - t0
    ok = abs(emp - theory) <= 0.03 and dt < 120
    assert criterion(2, ok, f"P_hat = {emp:.4f} vs {theory:.4f} (+-0.03), {n:.0e} steps, {dt:.1f}s (< 120s)")


def test_criterion_03_pareto_linear_model(criterion):
    t0 = time.perf_counter()
    theory = tail_dependence(RegVarSpec(1.0, 1.0), [1.0, 1.0], [1.0, 0.0])
    rng = make_rng(303)
    spec = InnovationSpec("pareto", 1.0)
    n = 10_000_000
    x = draw_innovations(spec, n, rng)
    y = x + draw_innovations(spec, n, rng)
    emp = empirical_conditional_exceedance(y, x, 0.999)
    dt = time.perf_counter() - t0
    ok = theory == pytest.approx(0.5, abs=1e-12) and abs(emp - 0.5) <= 0.03 and dt < 60
    assert criterion(3, ok, f"lambda = {theory:.6f} (= 1/2), Monte-Carlo {emp:.4f} (+-0.03), {dt:.1f}s (< 60s)")


def test_criterion_04_farima_lambda_grid(criterion):
    t0 = time.perf_counter()
    d_grid = (0.05, 0.15, 0.25)
    a_grid = (1.2, 1.4, 1.6, 1.8)
    g1 = farima_lambda_grid(d_grid, a_grid, 0.5, 1, K=100_000).values
    g2 = farima_lambda_grid(d_grid, a_grid, 0.5, 1, K=200_000).values
    dt = time.perf_counter() - t0

    def strictly_increasing(v):
        v = v[np.isfinite(v)]
        return bool(np.all(np.diff(v) > 0))

    inc_d = all(strictly_increasing(g1[:, j]) for j in range(len(a_grid)))
    dec_a = all(strictly_increasing(g1[i, ::-1]) for i in range(len(d_grid)))
    delta = float(np.nanmax(np.abs(g2 - g1)))
    where = np.unravel_index(np.nanargmax(np.abs(g2 - g1)), g1.shape)
    ok = inc_d and dec_a and delta < 1e-3 and dt < 120
    assert criterion(
        4,
        ok,
        f"increasing in d: {inc_d}, decreasing in alpha: {dec_a}, max change on doubling K = {delta:.2e} "
        f"(< 1e-3) at d={d_grid[where[0]]}, alpha={a_grid[where[1]]}, {dt:.1f}s (< 120s)",
    )


def test_criterion_05_farima_coefficient_asymptotics(criterion):
    t0 = time.perf_counter()
    j = 100_000
    vals = {d: farima_ma_coeffs(d, j + 1)[j] * gamma(d) * j ** (1 - d) for d in (0.1, 0.3)}
    dt = time.perf_counter() - t0
    ok = all(0.99 <= v <= 1.01 for v in vals.values()) and dt < 5
    shown = ", ".join(f"d={d}: {v:.6f}" for d, v in vals.items())
    assert criterion(5, ok, f"a_j Gamma(d) j^(1-d) at j=1e5: {shown} (in [0.99, 1.01]), {dt:.3f}s (< 5s)")


def test_criterion_06_inversion_identity(criterion):
    a = farima_ma_coeffs(0.3, 100)
    conv = np.convolve(a.a, invert_coeffs(a, 100))[:100]
    target = np.zeros(100)
    target[0] = 1.0
    err = float(np.max(np.abs(conv - target)))
    assert criterion(6, err <= 1e-10, f"max |a * b - delta| on 0..99 = {err:.2e} (<= 1e-10)")


@pytest.fixture(scope="module")
def ar5_study():
    """Twenty train/test replications of the AR(5) model with Cauchy innovations."""
    t0 = time.perf_counter()
    spec = InnovationSpec("cauchy")
    levels = (0.90, 0.95)
    pre = simulate_ar(PHI5, spec, SimConfig(1_000_000, seed=7000)).values
    y0 = {p: _quantile(pre, p) for p in levels}
    oracle_scores_pre = np.convolve(pre, PHI5, "valid")
    tau = {p: _quantile(oracle_scores_pre, p) for p in levels}
    reps = []
    for r in range(20):
        path = simulate_ar(PHI5, spec, SimConfig(10_000 + 100_000, seed=7001 + r)).values
        train, test = path[:10_000], path[10_000:]
        fit = fit_ar_lad(train, 5)
        rec = {"err": float(np.max(np.abs(fit.phi - PHI5)))}
        # Scores at every test time t with a full 5-lag history inside the test block.
        hist = test[:-1]
        for p in levels:
            events = test[5:] > y0[p]
            osc = np.convolve(hist, PHI5, "valid")
            o_alarm = osc > tau[p]
            pred = ar_predictor(fit, 1, train, p, event_threshold=y0[p])
            res = predict_arrays(pred, hist)
            e_alarm = res.alarms
            rec[p] = {
                "oracle": sample_metrics(tally_arrays(o_alarm, events)).precision,
                "plugin": sample_metrics(tally_arrays(e_alarm, events)).precision,
            }
        reps.append(rec)
    return reps, time.perf_counter() - t0


def test_criterion_07_ar5_simulation_study(ar5_study, criterion):
    reps, dt = ar5_study
    close = sum(r["err"] <= 0.05 for r in reps)
    gaps = {p: max(abs(r[p]["plugin"] - r[p]["oracle"]) for r in reps) for p in (0.90, 0.95)}
    mean_prec = {p: (np.mean([r[p]["oracle"] for r in reps]), np.mean([r[p]["plugin"] for r in reps])) for p in gaps}
    ok = close >= 18 and all(g <= 0.05 for g in gaps.values()) and dt < 600
    detail = (
        f"LAD within 0.05 in {close}/20 runs (>= 18); max |plug-in - oracle| precision: "
        + ", ".join(f"p={p}: {g:.4f}" for p, g in gaps.items())
        + " (<= 0.05); mean oracle/plug-in: "
        + ", ".join(f"p={p}: {o:.3f}/{e:.3f}" for p, (o, e) in mean_prec.items())
        + f"; {dt:.1f}s (< 600s)"
    )
    assert criterion(7, ok, detail)


def test_criterion_08_calibration(criterion):
    spec = InnovationSpec("cauchy")
    n_train, n_test = 1_000_000, 100_000
    path = simulate_ar(PHI5, spec, SimConfig(n_train + n_test, seed=8080)).values
    train, test = path[:n_train], path[n_train:]
    fit = fit_ar_lad(train, 5)
    parts = []
    ok = True
    for p in (0.90, 0.95):
        rate = predict_arrays(ar_predictor(fit, 1, train, p), test).alarms.mean()
        n = test.size - 4
        se = math.sqrt(p * (1 - p) / n)
        z = (rate - (1 - p)) / se
        ok &= abs(z) <= 3
        parts.append(f"p={p}: rate {rate:.5f} vs {1 - p:.2f} ({z:+.2f} SE)")
    assert criterion(8, ok, "; ".join(parts) + f" (|z| <= 3, train n={n_train:.0e}, test n={n_test:.0e})")


def test_criterion_09_yule_walker(criterion):
    phi = np.array([0.5, 0.2])
    y = simulate_ar(phi, InnovationSpec("gaussian"), SimConfig(1_000_000, seed=909)).values
    errs = {h: float(np.max(np.abs(companion_power(phi, h).phi_h - yule_walker(y, 2, h)))) for h in (1, 2, 3)}
    ok = all(e <= 1e-2 for e in errs.values())
    shown = ", ".join(f"h={h}: {e:.2e}" for h, e in errs.items())
    assert criterion(9, ok, f"max entrywise gap to empirical Yule-Walker: {shown} (<= 1e-2)")


def test_criterion_10_metrics_algebra(criterion):
    p = q = 0.9
    lam = 0.5
    probs = joint_probabilities(p, q, lam)
    rng = make_rng(1010)
    n = 1_000_000
    cell = rng.choice(4, size=n, p=probs)
    alarms = (cell == 0) | (cell == 1)
    events = (cell == 0) | (cell == 2)
    got = sample_metrics(tally_arrays(alarms, events)).to_dict()
    want = population_metrics(p, q, lam).to_dict()
    # Standard errors from a parametric bootstrap of the multinomial counts.
    boots = [sample_metrics(ConfusionCounts(*c)).to_dict() for c in rng.multinomial(n, probs, size=400)]
    names = ("precision", "tpr", "fpr", "tss", "hss", "f1", "edi")
    zs = {k: (got[k] - want[k]) / np.std([b[k] for b in boots], ddof=1) for k in names}
    within = all(abs(z) <= 3 for z in zs.values())

    grid = np.linspace(0.01, 0.99, 99)
    mono = {}
    for k in ("tss", "hss", "f1", "edi"):
        v = np.array([population_metrics(p, q, l).to_dict()[k] for l in grid])
        mono[k] = bool(np.all(np.diff(v) > 0))
    ok = within and all(mono.values())
    zshow = ", ".join(f"{k} {z:+.2f}" for k, z in zs.items())
    assert criterion(10, ok, f"z-scores vs population: {zshow} (|z| <= 3); strictly increasing in lambda: {mono}")


def test_criterion_11_gaussian_extremal_independence(criterion):
    rng = make_rng(1111)
    n = 10_000_000
    rho = 0.9
    x = rng.standard_normal(n)
    y = rho * x + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
    # The optimal linear score rho * x is order-equivalent to x.
    prec = {p: empirical_conditional_exceedance(y, rho * x, p) for p in (0.9, 0.999)}
    ok = prec[0.999] < prec[0.9] and prec[0.999] < 0.35
    assert criterion(
        11,
        ok,
        f"precision p=0.9: {prec[0.9]:.4f}, p=0.999: {prec[0.999]:.4f} (need p=0.999 below p=0.9 and below 0.35)",
    )


def test_criterion_12_oracle_bounds(criterion):
    j = np.arange(200)
    eq = oracle_bounds(RegVarSpec(1.5, 1.0), 0.5 ** j, 1)
    sym = oracle_bounds(RegVarSpec(1.5, 0.5), (-0.5) ** j, 1)
    mix = oracle_bounds(RegVarSpec(1.5, 0.8), (-0.5) ** j, 1)
    ok_eq = eq.case == "equal" and abs(eq.lambda_yy - eq.lambda_opt) <= 1e-12
    ok_sym = sym.case == "symmetric_sum" and abs(sym.lambda_yy + sym.lambda_y_neg - sym.lambda_opt) <= 1e-8
    ok_mix = mix.case == "bracketed" and mix.lower - 1e-12 <= mix.lambda_opt <= mix.upper + 1e-12
    assert criterion(
        12,
        ok_eq and ok_sym and ok_mix,
        f"equal case {eq.lambda_yy:.6f} = {eq.lambda_opt:.6f}; symmetric sum {sym.lambda_yy + sym.lambda_y_neg:.8f} "
        f"= {sym.lambda_opt:.8f}; bracket {mix.lower:.6f} <= {mix.lambda_opt:.6f} <= {mix.upper:.6f}",
    )


def test_criterion_13_backtest_determinism(tmp_path, criterion):
    y = simulate_farima(0.2, InnovationSpec("stable", 1.5), SimConfig(3000, seed=1313)).values
    cfg = BacktestConfig(
        window_len=1000,
        stride=100,
        horizons=(1, 6),
        levels=(0.9, 0.95),
        models=({"type": "baseline"}, {"type": "ar", "order": 5, "loss": "lad"}, {"type": "farima", "ell": 48}),
        seed=13,
    )
    dirs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        write_report(run_backtest(y, cfg), out)
        dirs.append(out)
    files = sorted(os.path.relpath(os.path.join(r, f), dirs[0]) for r, _, fs in os.walk(dirs[0]) for f in fs)
    match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], files, shallow=False)
    ok = not mismatch and not errors and len(match) == len(files) > 3
    assert criterion(13, ok, f"{len(match)}/{len(files)} report files byte-identical across two runs")
