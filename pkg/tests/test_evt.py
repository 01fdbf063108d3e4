import math

import numpy as np
import pytest
from scipy import stats

from tailcast.exceptions import DataError, DomainError, FitError
from tailcast.evt import (
    GevParams,
    GpParams,
    decluster_intervals,
    estimate_d,
    extremal_index_intervals,
    extreme_quantile,
    fit_farima,
    fit_gev,
    fit_gp,
    gev_cdf,
    gev_ppf,
    gp_cdf,
    gp_ppf,
    periodogram,
    periodogram_at,
    select_threshold,
)
from tailcast.series import EmpiricalDistribution, generalized_inverse
from tailcast.simulate import InnovationSpec, SimConfig, sample_innovations, simulate_farima


def _gev_sample(xi, n, seed):
    # scipy's genextreme uses c = -xi.
    return stats.genextreme.rvs(-xi, size=n, random_state=np.random.default_rng(seed))


def test_gev_heavy_shape_recovered():
    fit = fit_gev(_gev_sample(1 / 1.4, 5000, 1))
    assert abs(fit.xi - 1 / 1.4) <= 0.05
    assert fit.alpha == pytest.approx(1 / fit.xi)


def test_gev_gumbel_shape_near_zero():
    z = stats.gumbel_r.rvs(size=5000, random_state=np.random.default_rng(2))
    assert abs(fit_gev(z).xi) <= 0.05


def test_gev_light_tail_and_alpha_inf():
    fit = fit_gev(_gev_sample(-0.2, 5000, 3))
    assert abs(fit.xi + 0.2) <= 0.05
    assert fit.alpha == math.inf


def test_gev_location_scale_equivariant():
    z = _gev_sample(0.3, 3000, 4)
    f1, f2 = fit_gev(z), fit_gev(10 + 3 * z)
    assert f2.xi == pytest.approx(f1.xi, abs=1e-4)
    assert f2.mu == pytest.approx(10 + 3 * f1.mu, rel=1e-3)
    assert f2.sigma == pytest.approx(3 * f1.sigma, rel=1e-3)


def test_gev_cdf_ppf_inverse():
    p = GevParams(1.0, 2.0, 0.4)
    u = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(gev_cdf(gev_ppf(u, p), p), u, rtol=1e-12)
    np.testing.assert_allclose(gev_cdf([0.5, 2.0], p), stats.genextreme.cdf([0.5, 2.0], -0.4, 1.0, 2.0))


def test_gev_errors():
    with pytest.raises(DomainError):
        fit_gev(np.arange(10.0))
    with pytest.raises(FitError):
        fit_gev(np.ones(100))


def test_gp_exponential_shape_zero():
    x = np.random.default_rng(5).exponential(size=5000)
    assert abs(fit_gp(x).xi) <= 0.05


def test_gp_heavy_shape():
    x = stats.genpareto.rvs(0.7, size=5000, random_state=np.random.default_rng(6))
    fit = fit_gp(x)
    assert abs(fit.xi - 0.7) <= 0.07
    assert fit.sigma == pytest.approx(1.0, rel=0.1)


def test_gp_errors():
    with pytest.raises(FitError):
        fit_gp(np.full(50, 2.0))
    with pytest.raises(DomainError):
        fit_gp(np.r_[-1.0, np.ones(30)])
    with pytest.raises(DomainError):
        fit_gp(np.ones(5))


def test_gp_cdf_ppf_inverse():
    for xi in (-0.3, 0.0, 0.5):
        p = GpParams(1.5, xi)
        u = np.linspace(0.01, 0.95, 7)
        np.testing.assert_allclose(gp_cdf(gp_ppf(u, p), p), u, rtol=1e-10)


def test_declustering_independent_limit():
    times = np.arange(0, 1000, 50)
    clusters = decluster_intervals(times)
    assert extremal_index_intervals(times) == 1.0
    assert len(clusters) == times.size


def test_declustering_single_run():
    assert len(decluster_intervals(np.arange(10, 30))) == 1


def test_declustering_two_runs():
    times = np.array([0, 1, 2, 3, 100, 101, 102])
    # gaps 1,1,1,97,1,1: theta = 2*96^2/(6*96*95) = 0.337, C = ceil(2.36) = 3;
    # only the non-adjacent gap can be cut, leaving two clusters.
    assert extremal_index_intervals(times) == pytest.approx(2 * 96**2 / (6 * 96 * 95))
    got = decluster_intervals(times)
    assert [c.tolist() for c in got] == [[0, 1, 2, 3], [100, 101, 102]]


def test_declustering_small_inputs():
    assert decluster_intervals([]) == []
    assert [c.tolist() for c in decluster_intervals([7])] == [[7]]
    with pytest.raises(DomainError):
        decluster_intervals([3, 2])


def test_declustering_partitions_input():
    rng = np.random.default_rng(7)
    times = np.sort(rng.choice(10_000, 400, replace=False))
    clusters = decluster_intervals(times)
    np.testing.assert_array_equal(np.concatenate(clusters), times)


def _pareto(n, seed):
    return sample_innovations(InnovationSpec("pareto", 1.0), SimConfig(n, seed=seed))


def test_extreme_quantile_pareto_within_band():
    """True 0.999 quantile of Pareto(1) is 1000; the band is +-25%.

    Judged over ten fixed seeds, requiring at least eight inside the band.
    """
    est = np.array([extreme_quantile(_pareto(100_000, s), 0.999) for s in range(10)])
    inside = int(np.sum(np.abs(est / 1000 - 1) <= 0.25))
    print(f"pareto 0.999 estimates: {np.round(est, 1).tolist()} ({inside}/10 inside)")
    assert inside >= 8


def test_extreme_quantile_low_level_falls_back():
    x = _pareto(5000, 1)
    emp = generalized_inverse(EmpiricalDistribution(np.sort(x)), 0.5)
    assert extreme_quantile(x, 0.5) == emp
    choice = select_threshold(x)
    p = choice.p0 * 0.999
    assert extreme_quantile(x, p, choice) == generalized_inverse(EmpiricalDistribution(np.sort(x)), p)


def test_extreme_quantile_monotone_above_threshold():
    x = _pareto(20_000, 2)
    choice = select_threshold(x)
    qs = [extreme_quantile(x, p, choice) for p in (0.99, 0.995, 0.999)]
    assert qs[0] < qs[1] < qs[2]


def test_threshold_choice_in_range():
    x = _pareto(20_000, 3)
    ch = select_threshold(x)
    srt = np.sort(x)
    assert generalized_inverse(EmpiricalDistribution(srt), 0.75) <= ch.tau <= srt[-10]
    assert ch.n_clusters >= 20


def test_periodogram_examples():
    assert np.all(periodogram(np.zeros(16)).power == 0)
    spike = np.zeros(32)
    spike[0] = 1
    np.testing.assert_allclose(periodogram(spike).power, 1.0)
    n, lam0 = 256, 2 * np.pi * 20 / 256
    pg = periodogram(np.cos(lam0 * np.arange(n)))
    assert abs(pg.freqs[np.argmax(pg.power)] - lam0) <= np.pi / n
    with pytest.raises(DataError):
        periodogram([])


def test_periodogram_matches_direct_sum(rng):
    y = rng.normal(size=50)
    for M in (50, 10):
        pg = periodogram(y, M)
        j = np.arange(y.size)
        direct = np.abs(np.exp(-1j * np.outer(pg.freqs, j)) @ y) ** 2
        np.testing.assert_allclose(pg.power, direct, rtol=1e-9)
    pa = periodogram_at(y, 0.1, 3.0, 7)
    direct = np.abs(np.exp(-1j * np.outer(pa.freqs, j)) @ y) ** 2
    np.testing.assert_allclose(pa.power, direct, rtol=1e-9)


def test_estimate_d_white_noise():
    y = sample_innovations(InnovationSpec("stable", 1.5), SimConfig(10_000, seed=8))
    assert abs(estimate_d(y, 1.5)) <= 0.05


def test_estimate_d_farima():
    y = simulate_farima(0.2, InnovationSpec("stable", 1.5), SimConfig(10_000, seed=9)).values
    assert abs(estimate_d(y, 1.5) - 0.2) <= 0.07


def test_estimate_d_errors():
    with pytest.raises(DataError):
        estimate_d(np.zeros(100), 1.5)
    with pytest.raises(DomainError):
        estimate_d(np.ones(100), 2.5)


def test_fit_farima_output_in_bounds():
    y = simulate_farima(0.2, InnovationSpec("pareto", 1.5), SimConfig(5000, seed=10)).values
    fit = fit_farima(y - y.mean())
    assert 1.01 <= fit.alpha_hat <= 1.99
    assert -0.5 < fit.d_hat < 1 - 1 / fit.alpha_hat
    assert set(fit.to_dict()) == {"alpha_hat", "xi_hat", "d_hat", "n"}
