"""Sliding-window training, Adam, and prediction for the recurrent forecasters."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DimensionMismatch, InsufficientData
from . import metrics
from .network import LSTM, RNN, RecurrentNet, backward, build_net, forward_sequence, last_step_mse

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400.0
EVAL_BATCH = 256
METRIC_COLUMNS = ["epoch", "train_rmse", "test_rmse", "train_rmspe", "test_rmspe",
                  "train_acc", "test_acc"]


@dataclass
class TrainConfig:
    batch_size: int = 64
    n_epochs: int = 200
    hidden_sizes: tuple[int, ...] = (64,)
    learning_rate: float = 1e-3
    seq_len: int = 32
    horizon: int = 1
    split: float = 0.7
    kind: str = LSTM
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    acc_tol: float = metrics.DEFAULT_TOL
    use_time_feature: bool = False

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    def validate(self) -> "TrainConfig":
        for name in ("batch_size", "n_epochs", "seq_len", "horizon"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("hidden_sizes must be a nonempty list of positive widths")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must lie in (0, 1)")
        if self.kind not in (LSTM, RNN):
            raise ConfigError(f"kind must be {LSTM!r} or {RNN!r}")
        if not self.clip_norm > 0:
            raise ConfigError("clip_norm must be positive")
        return self

    @property
    def input_dim(self) -> int:
        return 2 if self.use_time_feature else 1

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass(frozen=True)
class MinMaxScaler:
    lo: float
    hi: float

    @classmethod
    def fit(cls, values) -> "MinMaxScaler":
        values = np.asarray(values, dtype=float)
        return cls(float(values.min()), float(values.max()))

    @property
    def span(self) -> float:
        # a constant training split maps to 0 rather than dividing by zero
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def normalize(self, v):
        return (np.asarray(v, dtype=float) - self.lo) / self.span

    def denormalize(self, v):
        return np.asarray(v, dtype=float) * self.span + self.lo


IDENTITY = MinMaxScaler(0.0, 1.0)


@dataclass
class EpochMetrics:
    epoch: int
    train_rmse: float
    test_rmse: float
    train_rmspe: float
    test_rmspe: float
    train_acc: float
    test_acc: float
    train_loss: float = 0.0

    def row(self) -> list:
        return [self.epoch] + [f"{getattr(self, c):.6f}" for c in METRIC_COLUMNS[1:]]


@dataclass
class Forecaster:
    """A trained network bundled with the normalization it was trained under."""

    net: RecurrentNet
    scaler: MinMaxScaler
    config: TrainConfig
    threshold_auto: float = float("nan")
    history: list[EpochMetrics] = field(default_factory=list)

    @property
    def seq_len(self) -> int:
        return self.config.seq_len

    @property
    def horizon(self) -> int:
        return self.config.horizon


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.clip_norm = clip_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> float:
        """Apply one update in place; returns the pre-clip gradient norm."""
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


# windows

def time_of_day(times_s) -> np.ndarray:
    return np.mod(np.asarray(times_s, dtype=float), SECONDS_PER_DAY) / SECONDS_PER_DAY


def feature_series(values_norm, times_s=None) -> np.ndarray:
    """(N,) normalized values -> (N, D) features."""
    cols = [np.asarray(values_norm, dtype=float)]
    if times_s is not None:
        cols.append(time_of_day(times_s))
    return np.stack(cols, axis=1)


def make_windows(features, targets, seq_len: int, horizon: int):
    """Inputs are ``seq_len`` consecutive rows; the target sits ``horizon`` past the last one.

    Returns (X of shape (seq_len, n, D), y of shape (n,), target indices).
    """
    features = np.asarray(features, dtype=float)
    n = len(features) - seq_len - horizon + 1
    if n <= 0:
        return np.empty((seq_len, 0, features.shape[1])), np.empty(0), np.empty(0, dtype=int)
    idx = np.arange(n)[None, :] + np.arange(seq_len)[:, None]
    target_idx = np.arange(n) + seq_len + horizon - 1
    return features[idx], np.asarray(targets, dtype=float)[target_idx], target_idx


def split_point(n: int, split: float) -> int:
    return int(round(split * n))


# training

def predict_normalized(net: RecurrentNet, X) -> np.ndarray:
    """Last-step outputs for a (T, n, D) window batch, evaluated in chunks."""
    out = np.empty(X.shape[1])
    for s in range(0, X.shape[1], EVAL_BATCH):
        preds, _ = forward_sequence(net, X[:, s:s + EVAL_BATCH])
        out[s:s + EVAL_BATCH] = preds[-1]
    return out


def score(y, y_hat, tol) -> tuple[float, float, float]:
    return metrics.rmse(y, y_hat), metrics.rmspe(y, y_hat), metrics.accuracy(y, y_hat, tol)


def fit_windows(net: RecurrentNet, X_train, y_train, X_test, y_test, cfg: TrainConfig,
                rng: np.random.Generator, scaler: MinMaxScaler = IDENTITY,
                on_epoch=None) -> list[EpochMetrics]:
    """Mini-batch training on prebuilt windows; ``y`` values are in normalized units.

    Metrics are in the original units given by ``scaler``. Test metrics use the
    parameters at the end of the epoch; train metrics are accumulated from the
    epoch's own forward passes.
    """
    cfg.validate()
    if X_train.shape[1] == 0 or X_test.shape[1] == 0:
        raise InsufficientData("need at least one training and one test window")
    opt = Adam(net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps, cfg.clip_norm)
    y_train_raw = scaler.denormalize(y_train)
    y_test_raw = scaler.denormalize(y_test)
    n = X_train.shape[1]
    history = []
    for epoch in range(1, cfg.n_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        # train metrics reuse each batch's forward pass, taken just before its update
        seen = np.empty(n)
        for s in range(0, n, cfg.batch_size):
            batch = order[s:s + cfg.batch_size]
            preds, trace = forward_sequence(net, X_train[:, batch])
            seen[batch] = preds[-1]
            loss, dpred = last_step_mse(preds, y_train[batch])
            opt.step(backward(net, trace, dpred).arrays())
            loss_sum += loss * len(batch)
        tr = score(y_train_raw, scaler.denormalize(seen), cfg.acc_tol)
        te = score(y_test_raw, scaler.denormalize(predict_normalized(net, X_test)), cfg.acc_tol)
        m = EpochMetrics(epoch, tr[0], te[0], tr[1], te[1], tr[2], te[2], loss_sum / n)
        history.append(m)
        log.debug("epoch %d loss %.6g test rmse %.4f rmspe %.3f",
                  epoch, m.train_loss, m.test_rmse, m.test_rmspe)
        if on_epoch is not None:
            on_epoch(m)
    return history


@dataclass
class WindowedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    scaler: MinMaxScaler
    split_index: int
    test_index: np.ndarray  # series position of each test target


def prepare(series, cfg: TrainConfig, times_s=None) -> WindowedData:
    """Normalize on the training split and cut chronological train/test windows."""
    series = np.asarray(series, dtype=float).ravel()
    if series.size <= cfg.seq_len + cfg.horizon:
        raise InsufficientData(
            f"series of length {series.size} is too short for seq_len {cfg.seq_len} "
            f"and horizon {cfg.horizon}")
    if cfg.use_time_feature and (times_s is None or len(times_s) != series.size):
        raise InsufficientData("time-of-day feature needs one timestamp per value")
    cut = split_point(series.size, cfg.split)
    scaler = MinMaxScaler.fit(series[:cut])
    norm = scaler.normalize(series)
    feats = feature_series(norm, times_s if cfg.use_time_feature else None)
    X, y, tidx = make_windows(feats, norm, cfg.seq_len, cfg.horizon)
    train = tidx < cut
    if not train.any() or train.all():
        raise InsufficientData("the split leaves no training or no test windows")
    return WindowedData(X[:, train], y[train], X[:, ~train], y[~train], scaler, cut, tidx[~train])


def train(net: RecurrentNet | None, series, cfg: TrainConfig, rng: np.random.Generator,
          times_s=None, on_epoch=None) -> tuple[Forecaster, list[EpochMetrics]]:
    """Train on a CongDiff series; ``net=None`` builds a fresh one from ``cfg`` and ``rng``."""
    cfg.validate()
    data = prepare(series, cfg, times_s)
    if net is None:
        net = build_net(cfg.kind, cfg.input_dim, cfg.hidden_sizes, rng)
    elif net.input_dim != cfg.input_dim:
        raise DimensionMismatch(f"network takes {net.input_dim} features, config gives {cfg.input_dim}")
    history = fit_windows(net, data.X_train, data.y_train, data.X_test, data.y_test, cfg, rng,
                          data.scaler, on_epoch)
    series = np.asarray(series, dtype=float).ravel()
    p70 = float(np.percentile(series[:data.split_index], 70))
    model = Forecaster(net, data.scaler, cfg, p70, history)
    return model, history


def predict(model: Forecaster, window, times_s=None) -> float:
    """Denormalized forecast for ``horizon`` steps after the end of ``window``."""
    window = np.asarray(window, dtype=float).ravel()
    if window.size != model.seq_len:
        raise DimensionMismatch(f"window has {window.size} values, model expects {model.seq_len}")
    return float(predict_many(model, window[None, :],
                              None if times_s is None else np.asarray(times_s)[None, :])[0])


def predict_many(model: Forecaster, windows, times_s=None) -> np.ndarray:
    """Vectorized ``predict`` over an (n, seq_len) array of raw windows."""
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 2 or windows.shape[1] != model.seq_len:
        raise DimensionMismatch(f"windows must be (n, {model.seq_len}), got {windows.shape}")
    X = model.scaler.normalize(windows.T)[:, :, None]
    if model.config.use_time_feature:
        if times_s is None:
            raise DimensionMismatch("model uses a time-of-day feature; pass window timestamps")
        X = np.concatenate([X, time_of_day(np.asarray(times_s).T)[:, :, None]], axis=2)
    return model.scaler.denormalize(predict_normalized(model.net, X))


def write_metrics(history, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in history:
            w.writerow(m.row())
    return path
