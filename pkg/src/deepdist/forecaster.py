"""CNN and LSTM distributional forecasters.

Both networks read a window of ``sequence_length`` feature rows (return and
rolling volatility) and emit raw distribution parameters, which
:func:`deepdist.losses.link_transform` turns into a :class:`DistributionSpec`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from deepdist import losses
from deepdist.autodiff import checkpoint
from deepdist.autodiff.layers import (
    conv1d,
    dense,
    dropout,
    flatten,
    glorot_uniform,
    lstm_init,
    lstm_layer,
    maxpool1d,
)
from deepdist.autodiff.optim import AdamState, adam_step, clip_global_norm, l2_penalty
from deepdist.autodiff.tensor import Tensor, make_node
from deepdist.distributions import DistributionSpec, Kind
from deepdist.errors import ConfigError, NumericError, ShapeError

log = logging.getLogger(__name__)


class Architecture(str, Enum):
    CNN1D = "cnn"
    LSTM = "lstm"


@dataclass(frozen=True)
class ModelConfig:
    architecture: Architecture = Architecture.LSTM
    kind: Kind = Kind.SKEWED_T
    sequence_length: int = 10
    n_features: int = 2
    lstm_units: tuple = (128, 64, 32)
    filters: int = 256
    kernel_size: int = 2
    pool_size: int = 2
    dropout: float = 0.02
    l2: float = 0.002
    learning_rate: float = 0.002
    batch_size: int = 128
    max_epochs: int = 300
    patience: int | None = 50
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "lstm_units", tuple(int(u) for u in self.lstm_units))
        positive = {
            "sequence_length": self.sequence_length, "n_features": self.n_features,
            "filters": self.filters, "kernel_size": self.kernel_size,
            "pool_size": self.pool_size, "learning_rate": self.learning_rate,
            "batch_size": self.batch_size, "clip_norm": self.clip_norm,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not self.lstm_units or min(self.lstm_units) < 1:
            raise ConfigError("lstm_units must be a non-empty tuple of positive sizes")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.l2 < 0 or self.max_epochs < 0:
            raise ConfigError("l2 and max_epochs must be non-negative")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None")
        if self.architecture is Architecture.CNN1D:
            t = self.sequence_length - self.kernel_size + 1
            if t < 1 or t // self.pool_size < 1:
                raise ConfigError("sequence too short for the CNN kernel and pool sizes")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = self.architecture.value
        d["kind"] = self.kind.value
        d["lstm_units"] = list(self.lstm_units)
        return d


class Network:
    """Parameter store plus forward pass for one architecture."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @property
    def head_width(self) -> int:
        return self.config.kind.n_params

    def weight_names(self) -> list[str]:
        """Names of the matrices that carry the L2 penalty (biases excluded)."""
        return [n for n in self.params if not n.endswith(".b")]

    def forward(self, x, training: bool = False, rng=None, tensors=None) -> Tensor:
        cfg = self.config
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[1:] != (cfg.sequence_length, cfg.n_features):
            raise ShapeError(
                f"forward: expected input [b, {cfg.sequence_length}, {cfg.n_features}], got {x.shape}"
            )
        p = tensors if tensors is not None else {k: Tensor(v) for k, v in self.params.items()}
        h = Tensor(x)
        if cfg.architecture is Architecture.LSTM:
            n_layers = len(cfg.lstm_units)
            for i in range(n_layers):
                last = i == n_layers - 1
                h = lstm_layer(h, p[f"lstm{i}.wx"], p[f"lstm{i}.wh"], p[f"lstm{i}.b"],
                               return_sequences=not last)
                h = dropout(h, cfg.dropout, training, rng)
        else:
            h = conv1d(h, p["conv.w"], p["conv.b"], activation="relu")
            h = maxpool1d(h, cfg.pool_size)
            h = flatten(h)
            h = dropout(h, cfg.dropout, training, rng)
        return dense(h, p["head.w"], p["head.b"])

    def raw_outputs(self, x, chunk: int = 2048) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        outs = [self.forward(x[i:i + chunk]).data for i in range(0, len(x), chunk)]
        if not outs:
            return np.empty((0, self.head_width))
        return np.concatenate(outs, axis=0)


def build(config: ModelConfig) -> Network:
    """Freshly initialised network; deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    k = config.kind.n_params
    if config.architecture is Architecture.LSTM:
        n_in = config.n_features
        for i, units in enumerate(config.lstm_units):
            wx, wh, b = lstm_init(rng, n_in, units)
            params[f"lstm{i}.wx"] = wx
            params[f"lstm{i}.wh"] = wh
            params[f"lstm{i}.b"] = b
            n_in = units
        feat = n_in
    else:
        c, f, ks = config.n_features, config.filters, config.kernel_size
        params["conv.w"] = glorot_uniform(rng, ks * c, f, (ks, c, f))
        params["conv.b"] = np.zeros(f)
        steps = (config.sequence_length - ks + 1) // config.pool_size
        feat = steps * f
    params["head.w"] = glorot_uniform(rng, feat, k, (feat, k))
    params["head.b"] = np.zeros(k)
    return Network(config, params)


@dataclass
class TrainedModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    log: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_nll: float = float("nan")

    @property
    def network(self) -> Network:
        return Network(self.config, self.params)

    def save(self, path) -> None:
        checkpoint.save(path, self.params)

    @classmethod
    def load(cls, path, config: ModelConfig) -> "TrainedModel":
        return cls(config, checkpoint.load(path))

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_nll", "val_nll"])
            for epoch, tr, va in self.log:
                w.writerow([epoch, f"{tr:.10f}", f"{va:.10f}"])


def _nll_node(raw: Tensor, targets: np.ndarray, kind: Kind) -> Tensor:
    value, grad = losses.nll(kind, raw.data, targets)

    def back(g):
        raw.accumulate(g * grad)

    return make_node(np.array(value), (raw,), back, "nll")


def evaluate_nll(network: Network, x, y) -> float:
    """Mean NLL of ``network`` on windows ``x`` and targets ``y`` (eval mode, no L2)."""
    raw = network.raw_outputs(x)
    value, _ = losses.nll(network.config.kind, raw, y)
    return value


def train(model: Network, train_windows, val_windows) -> TrainedModel:
    """Mini-batch Adam on the configured NLL, keeping the best-validation parameters.

    ``train_windows`` and ``val_windows`` are ``(inputs [N, seq, feat], targets [N])``
    pairs. Epoch 0 in the log is the untrained initialisation.
    """
    cfg = model.config
    x_tr, y_tr = (np.asarray(a, dtype=float) for a in train_windows)
    x_va, y_va = (np.asarray(a, dtype=float) for a in val_windows)
    if len(x_va) == 0:
        raise ConfigError("validation set is empty")
    if len(x_tr) == 0:
        raise ConfigError("training set is empty")
    rng = np.random.default_rng([cfg.seed, 1])
    names = list(model.params)
    weight_set = set(model.weight_names())
    current = {k: v.copy() for k, v in model.params.items()}
    state = AdamState(lr=cfg.learning_rate)
    net = Network(cfg, current)

    best = {k: v.copy() for k, v in current.items()}
    best_val = evaluate_nll(net, x_va, y_va)
    history = [(0, evaluate_nll(net, x_tr, y_tr), best_val)]
    best_epoch = 0
    since_best = 0
    n = len(x_tr)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            tensors = {k: Tensor(current[k], requires_grad=True) for k in names}
            raw = net.forward(x_tr[idx], training=True, rng=rng, tensors=tensors)
            try:
                loss = _nll_node(raw, y_tr[idx], cfg.kind)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {bi}: {exc}") from None
            loss.backward()
            grads = [tensors[k].grad if tensors[k].grad is not None else np.zeros_like(current[k])
                     for k in names]
            if cfg.l2 > 0:
                weights = [current[k] for k in names if k in weight_set]
                _, l2_grads = l2_penalty(weights, cfg.l2)
                it = iter(l2_grads)
                grads = [g + next(it) if k in weight_set else g for k, g in zip(names, grads)]
            grads, _ = clip_global_norm(grads, cfg.clip_norm)
            new, state = adam_step([current[k] for k in names], grads, state)
            current.update(zip(names, new))
            batch_losses.append((loss.item(), len(idx)))
        train_nll = sum(v * c for v, c in batch_losses) / n
        val_nll = evaluate_nll(net, x_va, y_va)
        if not np.isfinite(val_nll):
            raise NumericError(f"epoch {epoch}: non-finite validation NLL")
        history.append((epoch, train_nll, val_nll))
        log.debug("epoch %d train %.6f val %.6f", epoch, train_nll, val_nll)
        if val_nll < best_val:
            best_val = val_nll
            best = {k: v.copy() for k, v in current.items()}
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                break
    return TrainedModel(cfg, best, history, best_epoch, best_val)


def _as_model(model) -> Network:
    if isinstance(model, TrainedModel):
        return model.network
    return model


def predict_raw(model, windows) -> np.ndarray:
    return _as_model(model).raw_outputs(windows)


def predict_batch(model, windows) -> DistributionSpec:
    """Batched one-step-ahead forecasts for windows of shape ``[N, seq, feat]``."""
    net = _as_model(model)
    p = losses.link_transform(net.raw_outputs(windows), net.config.kind)
    return DistributionSpec(net.config.kind, p.mu, p.sigma, p.nu, p.xi)


def predict(model, window) -> DistributionSpec:
    """Forecast for a single window of shape ``[seq, feat]``."""
    net = _as_model(model)
    window = np.asarray(window, dtype=float)
    cfg = net.config
    if window.shape != (cfg.sequence_length, cfg.n_features):
        raise ShapeError(
            f"predict: expected window [{cfg.sequence_length}, {cfg.n_features}], got {window.shape}"
        )
    return predict_batch(net, window[None])[0]

