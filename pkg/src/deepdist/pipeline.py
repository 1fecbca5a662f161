"""Walk-forward forecasting for neural, GARCH and ground-truth models.

Every runner returns a :class:`ForecastStream`: the realized returns of the
test steps together with one batched :class:`DistributionSpec`, so scoring
and backtesting treat all model families identically.

Index bookkeeping: feature row ``j`` holds the return with index
``j + VOL_WINDOW`` and its trailing volatility. Window ``i`` spans feature
rows ``[i, i + SEQ_LEN)`` and its target is the return with index
``i + SEQ_LEN + VOL_WINDOW``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from deepdist import forecaster, garch
from deepdist.data import SEQ_LEN, VOL_WINDOW, ReturnSeries, WalkForwardPlan, add_vol_feature, \
    make_sequences, plan_walk_forward
from deepdist.distributions import DistributionSpec, Kind
from deepdist.errors import DataError
from deepdist.risk import es_forecast, var_forecast

log = logging.getLogger(__name__)

TARGET_OFFSET = SEQ_LEN + VOL_WINDOW


@dataclass
class ForecastRecord:
    date: str
    realized: float
    spec: DistributionSpec
    var: dict
    es: dict


@dataclass
class ForecastStream:
    """Out-of-sample forecasts: dates, realized returns and a batched spec."""

    dates: list
    realized: np.ndarray
    spec: DistributionSpec
    model: str = ""

    def __post_init__(self):
        self.realized = np.asarray(self.realized, dtype=float)
        if len(self.dates) != self.realized.size or len(self.spec) != self.realized.size:
            raise DataError("forecast stream: dates, returns and specs differ in length")

    def __len__(self):
        return self.realized.size

    def records(self, alphas=(0.05, 0.01)) -> list[ForecastRecord]:
        var = {a: np.atleast_1d(var_forecast(self.spec, a)) for a in alphas}
        es = {a: np.atleast_1d(es_forecast(self.spec, a)) for a in alphas}
        return [
            ForecastRecord(self.dates[i], float(self.realized[i]), self.spec[i],
                           {a: float(var[a][i]) for a in alphas}, {a: float(es[a][i]) for a in alphas})
            for i in range(len(self))
        ]


def _concat_specs(specs: list[DistributionSpec]) -> DistributionSpec:
    kind = specs[0].kind
    cols = []
    for j in range(4):
        if specs[0].params()[j] is None:
            cols.append(None)
            continue
        cols.append(np.concatenate([
            np.broadcast_to(np.asarray(s.params()[j], dtype=float), (len(s),)) for s in specs
        ]))
    return DistributionSpec(kind, *cols)


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of a run configuration."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def derive_seed(master: int, *path: int) -> int:
    """Deterministic child seed for a sub-task (for example a walk-forward iteration)."""
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


# --- preparation ---------------------------------------------------------------


@dataclass
class Prepared:
    windows: np.ndarray
    targets: np.ndarray
    dates: list
    returns: np.ndarray
    plan: WalkForwardPlan

    @property
    def test_return_indices(self) -> np.ndarray:
        return self.plan.test_indices + TARGET_OFFSET


def prepare(series: ReturnSeries, min_train: int = 1008, step: int = 504,
            val_frac: float = 0.33) -> Prepared:
    r = series.returns
    feats = add_vol_feature(r, VOL_WINDOW)
    x, y = make_sequences(feats, SEQ_LEN, targets=feats[:, 0])
    plan = plan_walk_forward(len(x), min_train, step, val_frac)
    dates = list(series.dates[TARGET_OFFSET:])
    return Prepared(x, y, dates, r, plan)


def _stream(prep: Prepared, specs: list, model: str) -> ForecastStream:
    idx = prep.plan.test_indices
    return ForecastStream([prep.dates[i] for i in idx], prep.targets[idx], _concat_specs(specs), model)


# --- runners -------------------------------------------------------------------


@dataclass
class NeuralRun:
    stream: ForecastStream
    models: list


def run_neural(prep: Prepared, config: forecaster.ModelConfig, seed: int = 0,
               keep_models: bool = False) -> NeuralRun:
    """Retrain from scratch on every expanding window and forecast its test block."""
    specs, models = [], []
    for k, it in enumerate(prep.plan):
        cfg = replace(config, seed=derive_seed(seed, k))
        net = forecaster.build(cfg)
        fit = slice(it.fit.start, it.fit.stop)
        val = slice(it.val.start, it.val.stop)
        test = slice(it.test.start, it.test.stop)
        trained = forecaster.train(net, (prep.windows[fit], prep.targets[fit]),
                                   (prep.windows[val], prep.targets[val]))
        log.info("iteration %d: best epoch %d, val nll %.5f", k, trained.best_epoch, trained.best_val_nll)
        specs.append(forecaster.predict_batch(trained, prep.windows[test]))
        models.append(trained if keep_models else None)
    name = f"{config.architecture.value}-{config.kind.code}"
    return NeuralRun(_stream(prep, specs, name), models)


@dataclass
class GarchRun:
    stream: ForecastStream
    params: list


def run_garch(prep: Prepared, kind: Kind, seed: int = 0) -> GarchRun:
    """Refit once per iteration on all returns up to the window end, then filter forward."""
    specs, fitted = [], []
    for k, it in enumerate(prep.plan):
        end = it.train.stop + TARGET_OFFSET
        p = garch.garch_fit(prep.returns[:end], kind, seed=derive_seed(seed, k))
        fitted.append(p)
        specs.append(garch.forecast_range(p, prep.returns, end, it.test.stop + TARGET_OFFSET))
    return GarchRun(_stream(prep, specs, f"garch-{kind.code}"), fitted)


def run_truth(prep: Prepared, truth: DistributionSpec) -> ForecastStream:
    """Ground-truth conditional distributions of the test steps (simulated data)."""
    idx = prep.test_return_indices
    return ForecastStream([prep.dates[i - TARGET_OFFSET] for i in idx], prep.returns[idx],
                          truth[idx], "truth")


# --- CSV I/O --------------------------------------------------------------------


STREAM_COLUMNS = ["date", "return", "mu", "sigma", "nu", "xi"]


def write_stream(stream: ForecastStream, path, chash: str | None = None) -> None:
    """Write ``date,return,mu,sigma,nu,xi`` (empty cells for absent shape parameters)."""
    s = stream.spec
    n = len(stream)
    cols = [None if v is None else np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in s.params()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# kind={s.kind.value} model={stream.model}")
        if chash:
            fh.write(f" config_hash={chash}")
        fh.write("\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STREAM_COLUMNS)
        for i in range(n):
            w.writerow([stream.dates[i], repr(float(stream.realized[i]))]
                       + ["" if c is None else repr(float(c[i])) for c in cols])


def read_stream(path) -> ForecastStream:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such forecast file")
    meta = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            meta = dict(kv.split("=", 1) for kv in first[1:].split() if "=" in kv)
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STREAM_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(STREAM_COLUMNS)}, got {header}")
        for lineno, row in enumerate(reader, start=3 if meta else 2):
            if len(row) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                rows.append([row[0]] + [float(v) if v else np.nan for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no forecasts")
    dates = [r[0] for r in rows]
    arr = np.array([r[1:] for r in rows], dtype=float)
    nu = None if np.all(np.isnan(arr[:, 3])) else arr[:, 3]
    xi = None if np.all(np.isnan(arr[:, 4])) else arr[:, 4]
    kind = Kind(meta["kind"]) if "kind" in meta else (
        Kind.NORMAL if nu is None else Kind.STUDENT_T if xi is None else Kind.SKEWED_T)
    try:
        spec = DistributionSpec(kind, arr[:, 1], arr[:, 2], nu, xi)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return ForecastStream(dates, arr[:, 0], spec, meta.get("model", ""))
