import math
import warnings

import numpy as np
import pytest
from scipy import stats

from deepdist import data
from deepdist.data import ReturnSeries
from deepdist.errors import DataError, DomainError, InsufficientDataError


def _write(tmp_path, text, name="prices.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_three_rows(tmp_path):
    path = _write(tmp_path, "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-06,99.99\n")
    r = data.to_returns(data.load_csv(path))
    assert r.dates == ["2020-01-03", "2020-01-06"]
    np.testing.assert_allclose(r.returns, [100 * math.log(1.01), 100 * math.log(99.99 / 101)], rtol=1e-12)
    assert r.returns[0] == pytest.approx(0.995033, abs=1e-6)
    assert r.returns[1] == pytest.approx(-1.005034, abs=1e-6)


def test_unsorted_rows_are_sorted_with_warning(tmp_path):
    path = _write(tmp_path, "date,close\n2020-01-03,101\n2020-01-02,100\n")
    with pytest.warns(UserWarning, match="sorting"):
        p = data.load_csv(path)
    assert p.dates == ["2020-01-02", "2020-01-03"]


@pytest.mark.parametrize("text, match", [
    ("date,close\n2020-01-02,100\n2020-01-02,101\n", "3: duplicate date 2020-01-02"),
    ("date,close\n2020-01-02,100\n2020-01-03,-1\n", ":3: close must be positive"),
    ("date,close\n2020-01-02,0\n", ":2: close must be positive"),
    ("date,close\n2020-13-02,100\n", ":2: unparseable date"),
    ("date,close\n2020-01-02,abc\n", ":2: unparseable close"),
    ("day,price\n2020-01-02,100\n", "header"),
    ("date,close\n", "no data rows"),
    ("", "empty file"),
])
def test_load_errors_carry_context(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        data.load_csv(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        data.load_csv(tmp_path / "nope.csv")


def test_return_series_invariants():
    with pytest.raises(DataError):
        ReturnSeries(["2020-01-02", "2020-01-02"], [0.1, 0.2])
    with pytest.raises(DataError):
        ReturnSeries(["2020-01-02"], [np.nan])
    with pytest.raises(DataError):
        ReturnSeries([], [])


def test_constant_prices_and_returns():
    p = data.PriceSeries([f"2020-01-{d:02d}" for d in range(1, 31)], np.full(30, 50.0))
    r = data.to_returns(p)
    assert np.all(r.returns == 0.0)
    feats = data.add_vol_feature(np.full(40, 0.3))
    assert np.all(feats[:, 1] == 0.0)


def test_vol_feature_brute_force():
    r = np.random.default_rng(0).normal(size=200)
    feats = data.add_vol_feature(r, 21)
    assert feats.shape == (179, 2)
    for j in range(feats.shape[0]):
        t = j + 21
        window = r[t - 20:t + 1]
        sd = math.sqrt(sum((v - window.mean()) ** 2 for v in window) / 20)
        assert feats[j, 0] == r[t]
        assert feats[j, 1] == pytest.approx(sd, abs=1e-12)


def test_vol_feature_needs_data():
    with pytest.raises(InsufficientDataError):
        data.add_vol_feature(np.zeros(21))


def test_sequences_count_and_alignment():
    x, y = data.make_sequences(np.zeros((12, 2)), 10)
    assert x.shape == (2, 10, 2) and y.shape == (2,)
    f = np.column_stack([np.arange(30.0), 100 + np.arange(30.0)])
    x, y = data.make_sequences(f, 10)
    for i in range(len(y)):
        np.testing.assert_array_equal(x[i, :, 0], np.arange(i, i + 10))
        assert y[i] == i + 10
        assert y[i] not in x[i, :, 0]
        assert x[i, :, 0].max() < y[i]
    with pytest.raises(InsufficientDataError):
        data.make_sequences(np.zeros((10, 2)), 10)


def test_plan_examples():
    plan = data.plan_walk_forward(2016)
    assert [(it.test.start, it.test.stop) for it in plan] == [(1008, 1512), (1512, 2016)]
    plan = data.plan_walk_forward(1009)
    assert len(plan) == 1 and len(plan.iterations[0].test) == 1
    plan = data.plan_walk_forward(1008 + 2487)
    assert plan.test_indices.size == 2487
    with pytest.raises(InsufficientDataError):
        data.plan_walk_forward(1008)
    with pytest.raises(DomainError):
        data.plan_walk_forward(2000, val_frac=1.0)


@pytest.mark.parametrize("n", [1009, 1600, 2016, 5000, 6007])
def test_plan_invariants(n):
    plan = data.plan_walk_forward(n)
    prev_train = 0
    expected_start = 1008
    for it in plan:
        assert it.train.start == 0 and len(it.train) >= 1008 and len(it.train) > prev_train
        prev_train = len(it.train)
        assert it.fit.stop == it.val.start and it.val.stop == it.train.stop
        assert len(it.val) == round(0.33 * len(it.train))
        assert it.test.start == it.train.stop == expected_start
        assert 1 <= len(it.test) <= 504
        assert max(it.train) < min(it.test)
        expected_start = it.test.stop
    assert expected_start == n
    np.testing.assert_array_equal(plan.test_indices, np.arange(1008, n))


def test_simulate_iid_normal_sd():
    sim = data.simulate("iid_normal", n=10**6, seed=1)
    r = sim.series.returns
    # sd of the sample sd of a normal is about sigma / sqrt(2 n)
    assert abs(r.std(ddof=1) - 1.0) < 3 / math.sqrt(2 * r.size)


def test_simulate_garch_t_heavy_tails_and_truth():
    sim = data.simulate("garch_t", n=20000, seed=2)
    assert stats.kurtosis(sim.series.returns, fisher=False) > 3
    assert len(sim.truth) == 20000
    # the truth is the conditional law: standardised residuals are unit variance
    z = (sim.series.returns - sim.truth.mu) / sim.truth.sigma
    nu = float(sim.truth.nu[0])
    assert np.var(z) * (nu - 2) / nu == pytest.approx(1.0, abs=0.1)


def test_simulate_deterministic_and_dates():
    a = data.simulate("garch_skewt", n=300, seed=5)
    b = data.simulate("garch_skewt", n=300, seed=5)
    np.testing.assert_array_equal(a.series.returns, b.series.returns)
    assert a.series.dates == b.series.dates
    assert not np.array_equal(a.series.returns, data.simulate("garch_skewt", n=300, seed=6).series.returns)
    with pytest.raises(DomainError):
        data.simulate("garch_normal", dict(alpha=0.5, beta=0.6), n=10)
    with pytest.raises(ValueError):
        data.simulate("arma", n=10)


def test_simulation_csv_round_trip(tmp_path):
    sim = data.simulate("garch_skewt", n=200, seed=7)
    path = tmp_path / "sim.csv"
    data.write_simulation_csv(sim, path)
    prices = data.load_csv(path)
    r = data.to_returns(prices)
    np.testing.assert_allclose(r.returns, sim.series.returns, atol=1e-9)
    assert r.dates == sim.series.dates
    truth = data.truth_from_prices(prices)
    assert truth.kind is sim.truth.kind
    np.testing.assert_array_equal(truth.sigma, sim.truth.sigma)
    plain = _write(tmp_path, "date,close\n2020-01-02,1\n2020-01-03,2\n", "plain.csv")
    assert data.truth_from_prices(data.load_csv(plain)) is None
