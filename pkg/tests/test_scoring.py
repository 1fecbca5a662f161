import json
import math

import numpy as np
import pytest

from deepdist import data, scoring
from deepdist.distributions import DistributionSpec, Kind, log_pdf, sample
from deepdist.errors import InsufficientDataError
from deepdist.losses import inverse_link, LinkedParams, nll

N = DistributionSpec.normal
S = DistributionSpec.skewed_t


def _batch_mean_se(draws_fn, realized, batches=10):
    vals = np.array([scoring.crps_sample(draws_fn(k), realized) for k in range(batches)])
    return vals.mean(), vals.std(ddof=1) / math.sqrt(batches)


# --- LPS ----------------------------------------------------------------------


def test_lps_standard_normal():
    assert scoring.lps(N(0, 1), 0.0) == pytest.approx(0.9189385, abs=1e-7)


def test_lps_mean_equals_training_nll():
    rng = np.random.default_rng(1)
    p = LinkedParams(rng.normal(size=50), rng.uniform(0.5, 2, 50), rng.uniform(3, 9, 50),
                     rng.uniform(0.6, 1.5, 50))
    r = rng.normal(size=50)
    spec = DistributionSpec(Kind.SKEWED_T, p.mu, p.sigma, p.nu, p.xi)
    loss, _ = nll(Kind.SKEWED_T, inverse_link(p, Kind.SKEWED_T), r)
    assert np.mean(scoring.lps(spec, r)) == pytest.approx(loss, abs=1e-12)


# --- CRPS ----------------------------------------------------------------------


def test_crps_normal_closed_form_values():
    assert scoring.crps(N(0, 1), 0.0) == pytest.approx(0.2336950, abs=1e-7)
    assert scoring.crps(N(0, 1), 0.0) == pytest.approx((math.sqrt(2) - 1) / math.sqrt(math.pi), abs=1e-15)
    assert scoring.crps(N(1.5, 2.5), 1.5) == pytest.approx(2.5 * 0.2336950, abs=1e-6)


def test_crps_normal_against_sample_estimator():
    est, se = _batch_mean_se(lambda k: sample(N(0, 1), 10**6, seed=100 + k), 0.0)
    assert abs(est - scoring.crps(N(0, 1), 0.0)) < 3 * se


def test_crps_skewt_against_sample_estimator():
    spec = S(0.0, 1.0, 6.0, 1.5)
    est, se = _batch_mean_se(lambda k: sample(spec, 10**6, seed=200 + k), 0.3)
    assert abs(est - scoring.crps(spec, 0.3)) < 3 * se


def test_crps_sample_small_cases():
    # two draws {0, 2}, realised 1: E|X - 1| = 1, pair mean over i != j = 2
    assert scoring.crps_sample([0.0, 2.0], 1.0) == pytest.approx(0.0)
    with pytest.raises(InsufficientDataError):
        scoring.crps_sample([1.0], 0.0)
    rng = np.random.default_rng(0)
    d = rng.normal(size=40)
    brute = np.mean(np.abs(d - 0.4)) - 0.5 * np.abs(d[:, None] - d[None, :]).sum() / (40 * 39)
    assert scoring.crps_sample(d, 0.4) == pytest.approx(brute, abs=1e-13)


def test_quadrature_agrees_with_normal_closed_form():
    x = np.linspace(-6, 6, 25)
    spec = N(np.full(25, 0.3), np.full(25, 1.7))
    np.testing.assert_allclose(scoring.crps_quadrature(spec, x), scoring.crps_normal(0.3, 1.7, x),
                               atol=1e-8)


def test_quadrature_student_t_against_closed_form():
    # closed form for the standard t CRPS (nu > 1)
    from scipy import special as sp
    from scipy import stats
    nu = 5.0
    z = np.array([-3.0, -0.4, 0.0, 1.1, 6.0])
    b = sp.beta(0.5, nu - 0.5) / sp.beta(0.5, nu / 2) ** 2
    ref = (z * (2 * stats.t.cdf(z, nu) - 1)
           + 2 * stats.t.pdf(z, nu) * (nu + z * z) / (nu - 1)
           - 2 * math.sqrt(nu) * b / (nu - 1))
    spec = DistributionSpec.student_t(np.zeros(5), np.ones(5), np.full(5, nu))
    np.testing.assert_allclose(scoring.crps(spec, z), ref, atol=1e-8)


def test_crps_skewt_by_direct_integration():
    from scipy import integrate
    from deepdist.distributions import cdf
    spec = S(0.2, 1.3, 4.0, 0.7)
    for x in [-2.0, 0.2, 1.5]:
        left = integrate.quad(lambda y: cdf(spec, y) ** 2, -np.inf, x, epsabs=1e-12, limit=500)[0]
        right = sum(integrate.quad(lambda y: (1 - cdf(spec, y)) ** 2, a, b, epsabs=1e-12, limit=500)[0]
                    for a, b in [(x, max(x, 0.2)), (max(x, 0.2), np.inf)])
        assert scoring.crps(spec, x) == pytest.approx(left + right, abs=1e-8)


def test_crps_batched_matches_scalar_and_is_nonnegative():
    rng = np.random.default_rng(3)
    n = 30
    spec = S(rng.normal(size=n), rng.uniform(0.3, 3, n), rng.uniform(2.2, 30, n), rng.uniform(0.3, 3, n))
    x = rng.normal(0, 3, n)
    batch = scoring.crps(spec, x)
    assert np.all(batch >= 0)
    for i in [0, 7, 29]:
        assert batch[i] == pytest.approx(scoring.crps(spec[i], x[i]), abs=1e-8)


def test_crps_minimised_at_realisation_for_symmetric_forecast():
    grid = np.linspace(-1, 1, 41)
    spec = DistributionSpec.student_t(grid, np.ones_like(grid), np.full_like(grid, 4.0))
    vals = scoring.crps(spec, 0.25)
    assert grid[np.argmin(vals)] == pytest.approx(0.25)


def test_means_are_permutation_invariant():
    sim = data.simulate("garch_t", n=400, seed=2)
    spec, r = sim.truth, sim.series.returns
    perm = np.random.default_rng(0).permutation(400)
    a = scoring.summarize(spec, r)
    b = scoring.summarize(spec[perm], r[perm])
    assert a.mean_lps == pytest.approx(b.mean_lps, abs=1e-13)
    assert a.mean_crps == pytest.approx(b.mean_crps, abs=1e-12)


# --- PIT ----------------------------------------------------------------------------


def test_pit_examples():
    assert scoring.pit(N(0, 1), 0.0) == 0.5


def test_true_forecasts_pass_uniformity():
    passed = 0
    for seed in range(100):
        sim = data.simulate("garch_skewt", n=1000, seed=seed)
        _, p = scoring.pit_uniformity_test(scoring.pit(sim.truth, sim.series.returns))
        passed += p >= 0.05
    assert passed >= 90


def test_overdispersed_forecast_rejected():
    r = sample(N(0, 1), 2000, seed=4)
    _, p = scoring.pit_uniformity_test(scoring.pit(N(0, 10), r))
    assert p < 0.01


def test_ks_statistic_examples():
    n = 200
    grid = (np.arange(1, n + 1) - 0.5) / n
    d, p = scoring.pit_uniformity_test(grid)
    assert d == pytest.approx(1 / (2 * n), abs=1e-15)
    assert p == pytest.approx(1.0, abs=1e-6)
    d, p = scoring.pit_uniformity_test(np.full(100, 0.5))
    assert d == pytest.approx(0.5) and p < 1e-10
    with pytest.raises(InsufficientDataError):
        scoring.pit_uniformity_test(np.full(9, 0.5))


def test_ks_matches_scipy():
    from scipy import stats
    u = np.random.default_rng(5).uniform(size=300) ** 1.1
    d, p = scoring.pit_uniformity_test(u)
    ref = stats.kstest(u, "uniform", method="exact")
    assert d == pytest.approx(ref.statistic, abs=1e-15)
    assert p == pytest.approx(ref.pvalue, rel=1e-8)


def test_ks_size_over_seeds():
    rejections = 0
    for seed in range(200):
        u = np.random.default_rng(seed).uniform(size=2487)
        rejections += scoring.pit_uniformity_test(u)[1] < 0.05
    sd = math.sqrt(0.05 * 0.95 / 200)
    assert abs(rejections / 200 - 0.05) <= 3 * sd


# --- summaries and formatting -------------------------------------------------------


def test_summary_fields_and_histogram():
    sim = data.simulate("garch_normal", n=500, seed=3)
    s = scoring.summarize(sim.truth, sim.series.returns)
    assert s.count == 500 and s.pit.size == 500
    assert np.all((s.pit >= 0) & (s.pit <= 1))
    assert sum(s.histogram()) == 500
    d = s.to_dict()
    assert set(d) == {"count", "mean_lps", "mean_crps", "ks_statistic", "pit_pvalue", "pit_histogram"}


def test_format_and_dumps():
    assert scoring.format_number("mean_lps", 1.1933761234) == "1.193376"
    assert scoring.format_number("pit_pvalue", 2.41e-07) == "2.41e-07"
    assert scoring.format_number("exceedance_percent", 4.865299) == "4.865299"
    assert scoring.format_number("count", 7) == 7
    text = scoring.dumps_fixed({"mean_crps": 0.5, "p": float("nan"), "nested": {"mean_lps": 2.0},
                                "hist": [1, 2], "flag": True, "none": None})
    parsed = json.loads(text)
    assert parsed["mean_crps"] == 0.5 and parsed["p"] is None and parsed["nested"]["mean_lps"] == 2.0
    assert '"mean_crps": 0.500000' in text
