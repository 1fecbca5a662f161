"""Price ingestion, return features, windowing, walk-forward plans and simulation."""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from deepdist.distributions import DistributionSpec, Kind, from_mean_sd, sample
from deepdist.errors import DataError, DomainError, InsufficientDataError

VOL_WINDOW = 21
SEQ_LEN = 10


@dataclass
class PriceSeries:
    dates: list[str]
    close: np.ndarray
    symbol: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ReturnSeries:
    """Percent log-returns ``100 * ln(P_t / P_{t-1})`` indexed by ISO dates."""

    dates: list[str]
    returns: np.ndarray
    symbol: str | None = None

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if len(self.dates) != self.returns.size:
            raise DataError("dates and returns differ in length")
        if self.returns.size < 1:
            raise DataError("a return series needs at least one value")
        if not np.all(np.isfinite(self.returns)):
            raise DataError("return series contains missing or non-finite values")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("return dates must be strictly increasing")

    def __len__(self):
        return self.returns.size


def load_csv(path) -> PriceSeries:
    """Read a ``date,close`` CSV (extra columns are kept in ``extra``).

    Rows are sorted by date with a warning if they were out of order.
    Duplicate dates and non-positive prices raise :class:`DataError`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:2] != ["date", "close"]:
            raise DataError(f"{path}: header must start with 'date,close', got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected at least 2 fields")
            try:
                day = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable date {row[0]!r}") from None
            try:
                price = float(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable close {row[1]!r}") from None
            if not (price > 0) or not math.isfinite(price):
                raise DataError(f"{path}:{lineno}: close must be positive, got {row[1]!r}")
            rows.append((day, price, lineno, row[2:]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    ordered = sorted(rows, key=lambda r: r[0])
    if ordered != rows:
        warnings.warn(f"{path}: rows were not sorted by date; sorting", stacklevel=2)
    for a, b in zip(ordered, ordered[1:]):
        if a[0] == b[0]:
            raise DataError(f"{path}:{b[2]}: duplicate date {b[0].isoformat()}")
    extra = {}
    for j, name in enumerate(header[2:]):
        col = []
        for r in ordered:
            cell = r[3][j].strip() if j < len(r[3]) else ""
            col.append(float(cell) if cell else np.nan)
        extra[name] = np.array(col)
    return PriceSeries(
        [r[0].isoformat() for r in ordered],
        np.array([r[1] for r in ordered]),
        symbol=path.stem,
        extra=extra,
    )


def to_returns(prices: PriceSeries) -> ReturnSeries:
    close = np.asarray(prices.close, dtype=float)
    if close.size < 2:
        raise InsufficientDataError("need at least two prices to form a return")
    r = 100.0 * np.diff(np.log(close))
    return ReturnSeries(list(prices.dates[1:]), r, prices.symbol)


def add_vol_feature(returns, window: int = VOL_WINDOW) -> np.ndarray:
    """Feature matrix ``[n - window, 2]``: return and trailing sample sd.

    Row ``j`` corresponds to return index ``t = j + window`` and holds
    ``(r_t, sd(r_{t-window+1}, ..., r_t))``. The first ``window`` returns are
    warm-up only.
    """
    r = np.asarray(returns.returns if isinstance(returns, ReturnSeries) else returns, dtype=float)
    if r.size <= window:
        raise InsufficientDataError(f"need more than {window} returns for the volatility feature")
    windows = np.lib.stride_tricks.sliding_window_view(r, window)
    # shifting by the first element is exact for constant windows and limits cancellation
    sd = (windows - windows[:, :1]).std(axis=1, ddof=1)
    # sd[k] covers r[k : k + window]; row for t uses k = t - window + 1
    return np.column_stack([r[window:], sd[1:]])


def make_sequences(features, seq_len: int = SEQ_LEN, targets=None):
    """Sliding windows over feature rows.

    Window ``i`` covers rows ``[i, i + seq_len)`` and its target is the
    return at row ``i + seq_len`` (column 0 unless ``targets`` is given).
    """
    f = np.asarray(features, dtype=float)
    if f.ndim != 2:
        raise DomainError("features must be a 2-D array")
    y_all = f[:, 0] if targets is None else np.asarray(targets, dtype=float)
    n = f.shape[0]
    count = n - seq_len
    if count < 1:
        raise InsufficientDataError(f"need more than {seq_len} feature rows, got {n}")
    x = np.lib.stride_tricks.sliding_window_view(f, (seq_len, f.shape[1]))[:count, 0]
    return np.ascontiguousarray(x), y_all[seq_len:].copy()


@dataclass(frozen=True)
class Iteration:
    train: range
    fit: range
    val: range
    test: range


@dataclass(frozen=True)
class WalkForwardPlan:
    n: int
    iterations: tuple

    def __iter__(self):
        return iter(self.iterations)

    def __len__(self):
        return len(self.iterations)

    @property
    def test_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(it.test.start, it.test.stop) for it in self.iterations])


def plan_walk_forward(n: int, min_train: int = 1008, step: int = 504,
                      val_frac: float = 0.33) -> WalkForwardPlan:
    """Expanding-window plan over ``n`` samples.

    Iteration ``i`` trains on ``[0, min_train + i * step)`` (the last
    ``val_frac`` of it held out for validation, chronologically) and tests on
    the next ``step`` samples or the remainder.
    """
    if n <= min_train:
        raise InsufficientDataError(f"need more than {min_train} samples, got {n}")
    if step < 1 or not 0 < val_frac < 1:
        raise DomainError("step must be >= 1 and 0 < val_frac < 1")
    its = []
    end = min_train
    while end < n:
        n_val = max(1, int(round(val_frac * end)))
        if n_val >= end:
            raise DomainError("validation slice leaves no training data")
        stop = min(end + step, n)
        its.append(Iteration(range(0, end), range(0, end - n_val), range(end - n_val, end),
                             range(end, stop)))
        end = stop
    return WalkForwardPlan(n, tuple(its))


# --- simulation ---------------------------------------------------------------


class DGP(str, Enum):
    IID_NORMAL = "iid_normal"
    GARCH_NORMAL = "garch_normal"
    GARCH_T = "garch_t"
    GARCH_SKEWT = "garch_skewt"


DEFAULT_DGP_PARAMS = {
    DGP.IID_NORMAL: {"mu": 0.0, "sigma": 1.0},
    DGP.GARCH_NORMAL: {"mu": 0.05, "omega": 0.05, "alpha": 0.08, "beta": 0.9},
    DGP.GARCH_T: {"mu": 0.05, "omega": 0.05, "alpha": 0.08, "beta": 0.9, "nu": 6.0},
    DGP.GARCH_SKEWT: {"mu": 0.05, "omega": 0.05, "alpha": 0.08, "beta": 0.9, "nu": 6.0, "xi": 0.85},
}


@dataclass
class SimulatedSeries:
    series: ReturnSeries
    truth: DistributionSpec
    params: dict

    def to_prices(self, start: float = 100.0) -> PriceSeries:
        r = self.series.returns
        close = start * np.exp(np.concatenate(([0.0], np.cumsum(r) / 100.0)))
        first = np.datetime64(self.series.dates[0]) - np.timedelta64(1, "D")
        first = np.busday_offset(first, 0, roll="backward")
        return PriceSeries([str(first)] + list(self.series.dates), close, self.series.symbol)


def _business_days(n: int, start: str = "2000-01-04") -> list[str]:
    days = np.busday_offset(np.datetime64(start), np.arange(n), roll="forward")
    return [str(d) for d in days]


def simulate(dgp, params: dict | None = None, n: int = 1000, seed: int = 0) -> SimulatedSeries:
    """Simulate ``n`` returns with the ground-truth conditional distribution of each."""
    dgp = DGP(dgp)
    p = dict(DEFAULT_DGP_PARAMS[dgp])
    p.update(params or {})
    if n < 1:
        raise DomainError("simulate requires n >= 1")
    rng = np.random.default_rng(seed)
    if dgp is DGP.IID_NORMAL:
        spec = DistributionSpec.normal(p["mu"], p["sigma"])
        r = sample(spec, n, rng)
        truth = DistributionSpec.normal(np.full(n, p["mu"]), np.full(n, p["sigma"]))
    else:
        kind = {DGP.GARCH_NORMAL: Kind.NORMAL, DGP.GARCH_T: Kind.STUDENT_T,
                DGP.GARCH_SKEWT: Kind.SKEWED_T}[dgp]
        nu, xi = p.get("nu"), p.get("xi")
        if kind is Kind.NORMAL:
            nu = xi = None
        elif kind is Kind.STUDENT_T:
            xi = None
        mu, omega, alpha, beta = p["mu"], p["omega"], p["alpha"], p["beta"]
        if not alpha + beta < 1:
            raise DomainError("simulate: alpha + beta must be < 1")
        z = sample(from_mean_sd(kind, 0.0, 1.0, nu, xi), n, rng)
        var = np.empty(n)
        r = np.empty(n)
        s2 = omega / (1.0 - alpha - beta)
        for t in range(n):
            var[t] = s2
            r[t] = mu + math.sqrt(s2) * z[t]
            s2 = omega + alpha * (r[t] - mu) ** 2 + beta * s2
        truth = from_mean_sd(kind, np.full(n, mu), np.sqrt(var),
                             None if nu is None else np.full(n, nu),
                             None if xi is None else np.full(n, xi))
    series = ReturnSeries(_business_days(n), r, symbol=f"sim_{dgp.value}")
    return SimulatedSeries(series, truth, {"dgp": dgp.value, **p})


def write_simulation_csv(sim: SimulatedSeries, path) -> None:
    """Write ``date,close,mu,sigma,nu,xi``; the first row (base price) has no truth."""
    prices = sim.to_prices()
    t = sim.truth
    n = len(sim.series)

    def col(v):
        return None if v is None else np.broadcast_to(v, (n,))

    mu, sigma, nu, xi = col(t.mu), col(t.sigma), col(t.nu), col(t.xi)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "close", "mu", "sigma", "nu", "xi"])
        w.writerow([prices.dates[0], repr(float(prices.close[0])), "", "", "", ""])
        for i in range(n):
            w.writerow([
                prices.dates[i + 1], repr(float(prices.close[i + 1])),
                repr(float(mu[i])), repr(float(sigma[i])),
                "" if nu is None else repr(float(nu[i])),
                "" if xi is None else repr(float(xi[i])),
            ])


def truth_from_prices(prices: PriceSeries) -> DistributionSpec | None:
    """Ground-truth specs for the returns of a simulator CSV, if present."""
    ex = prices.extra
    if "mu" not in ex or "sigma" not in ex:
        return None
    mu, sigma = ex["mu"][1:], ex["sigma"][1:]
    nu = ex.get("nu")
    xi = ex.get("xi")
    nu = None if nu is None or np.all(np.isnan(nu[1:])) else nu[1:]
    xi = None if xi is None or np.all(np.isnan(xi[1:])) else xi[1:]
    kind = Kind.NORMAL if nu is None else (Kind.STUDENT_T if xi is None else Kind.SKEWED_T)
    return DistributionSpec(kind, mu, sigma, nu, xi)
