import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iovcm.errors import CheckpointError, ConfigError, DimensionMismatch, InsufficientData
from iovcm.forecaster import checkpoint, metrics
from iovcm.forecaster.network import RNN
from iovcm.forecaster.training import (IDENTITY, Adam, MinMaxScaler, TrainConfig, make_windows,
                                       predict, predict_many, prepare, train, write_metrics)

K = 7.0


@pytest.fixture(scope="module")
def constant_run():
    cfg = TrainConfig(batch_size=16, n_epochs=50, hidden_sizes=(8,), seq_len=8)
    return train(None, np.full(200, K), cfg, np.random.default_rng(0))


@pytest.fixture(scope="module")
def sinusoid_run():
    t = np.arange(600)
    series = 2.0 + np.sin(2 * np.pi * t / 20)  # offset keeps targets away from zero
    cfg = TrainConfig(batch_size=32, n_epochs=100, hidden_sizes=(16,), seq_len=16, horizon=1)
    model, history = train(None, series, cfg, np.random.default_rng(0))
    return series, model, history


def test_constant_series_is_learned(constant_run):
    model, history = constant_run
    assert history[-1].test_rmse < 1e-2
    assert history[49].train_loss < history[0].train_loss


def test_constant_prediction(constant_run):
    model, _ = constant_run
    window = np.full(model.seq_len, K)
    p = predict(model, window)
    assert abs(p - K) <= 0.01 * K
    assert predict(model, window) == p


def test_sinusoid_rmspe(sinusoid_run):
    _, _, history = sinusoid_run
    assert history[-1].test_rmspe < 5.0


def test_sinusoid_metric_recomputation(sinusoid_run):
    series, model, history = sinusoid_run
    data = prepare(series, model.config)
    L = model.seq_len
    windows = np.stack([series[j - L:j] for j in data.test_index])
    y_hat = predict_many(model, windows)
    assert abs(metrics.rmse(series[data.test_index], y_hat) - history[-1].test_rmse) <= 1e-9


def test_split_uses_training_extrema_only():
    series = np.concatenate([np.linspace(0, 1, 70), np.full(30, 50.0)])
    data = prepare(series, TrainConfig(seq_len=4))
    assert data.scaler == MinMaxScaler(0.0, 1.0)
    assert data.split_index == 70 and np.all(data.test_index >= 70)


def test_windows_layout():
    X, y, idx = make_windows(np.arange(10.0)[:, None], np.arange(10.0), 3, 2)
    assert X.shape == (3, 6, 1)
    np.testing.assert_array_equal(X[:, 0, 0], [0, 1, 2])
    assert y[0] == 4 and idx[-1] == 9


@given(st.floats(-1e4, 1e4), st.floats(1e-3, 1e4), st.floats(0, 1))
def test_normalization_round_trip(lo, width, u):
    s = MinMaxScaler(lo, lo + width)
    v = lo + u * width
    assert abs(float(s.denormalize(s.normalize(v))) - v) <= 1e-12 * max(1.0, abs(v))


def test_constant_split_scaler():
    s = MinMaxScaler.fit([3.0, 3.0])
    assert s.span == 1.0 and float(s.normalize(3.0)) == 0.0


def test_determinism():
    series = np.random.default_rng(5).integers(0, 20, 150).astype(float)
    cfg = TrainConfig(batch_size=16, n_epochs=3, hidden_sizes=(4, 3), seq_len=6)
    a, ha = train(None, series, cfg, np.random.default_rng(9))
    b, hb = train(None, series, cfg, np.random.default_rng(9))
    for p, q in zip(a.net.parameters(), b.net.parameters()):
        np.testing.assert_array_equal(p, q)
    assert [m.row() for m in ha] == [m.row() for m in hb]


def test_insufficient_and_invalid():
    with pytest.raises(InsufficientData):
        train(None, np.ones(10), TrainConfig(seq_len=9, horizon=1), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        train(None, np.ones(100), TrainConfig(seq_len=4, split=1.0), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        TrainConfig(hidden_sizes=()).validate()


def test_predict_dimension_mismatch(constant_run):
    model, _ = constant_run
    with pytest.raises(DimensionMismatch):
        predict(model, np.ones(model.seq_len + 1))


def test_threshold_is_training_percentile():
    series = np.arange(100.0)
    model, _ = train(None, series, TrainConfig(n_epochs=1, seq_len=4, hidden_sizes=(2,)),
                     np.random.default_rng(0))
    assert model.threshold_auto == pytest.approx(np.percentile(series[:70], 70))


def test_time_feature():
    n = 120
    series = np.random.default_rng(1).integers(0, 9, n).astype(float)
    times = np.arange(n) * 350.0
    cfg = TrainConfig(n_epochs=2, seq_len=5, hidden_sizes=(3,), use_time_feature=True)
    model, _ = train(None, series, cfg, np.random.default_rng(0), times_s=times)
    assert model.net.input_dim == 2
    assert np.isfinite(predict(model, series[:5], times[:5]))
    with pytest.raises(DimensionMismatch):
        predict(model, series[:5])


def test_adam_first_step_is_lr_times_sign():
    p = np.array([1.0, -2.0, 0.5])
    opt = Adam([p], lr=0.01)
    opt.step([np.array([3.0, -0.2, 0.0])])
    np.testing.assert_allclose(p, [0.99, -1.99, 0.5], atol=1e-8)


def test_adam_clipping():
    a, b = np.zeros(2), np.zeros(2)
    g = np.array([30.0, 40.0])
    Adam([a], lr=0.1, clip_norm=5.0).step([g])
    Adam([b], lr=0.1).step([g / 10])
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_checkpoint_round_trip(tmp_path, constant_run):
    model, _ = constant_run
    path = checkpoint.save(model, tmp_path / "m.json")
    back = checkpoint.load(path)
    windows = np.random.default_rng(0).uniform(0, 10, (5, model.seq_len))
    np.testing.assert_array_equal(predict_many(model, windows), predict_many(back, windows))
    assert back.config == model.config and back.scaler == model.scaler
    assert checkpoint.save(back, tmp_path / "m2.json").read_bytes() == path.read_bytes()


def test_checkpoint_rnn(tmp_path):
    cfg = TrainConfig(n_epochs=1, seq_len=4, hidden_sizes=(3,), kind=RNN)
    model, _ = train(None, np.arange(60.0), cfg, np.random.default_rng(0))
    back = checkpoint.load(checkpoint.save(model, tmp_path / "r.json"))
    assert back.net.kind == RNN
    assert predict(back, np.arange(4.0)) == predict(model, np.arange(4.0))


def test_checkpoint_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other"}))
    with pytest.raises(CheckpointError):
        checkpoint.load(bad)
    bad.write_text("{not json")
    with pytest.raises(CheckpointError):
        checkpoint.load(bad)
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "missing.json")


def test_metrics_csv(tmp_path, constant_run):
    _, history = constant_run
    lines = write_metrics(history, tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_rmse,test_rmse,train_rmspe,test_rmspe,train_acc,test_acc"
    assert len(lines) == 51 and lines[1].startswith("1,")


def test_identity_scaler():
    assert float(IDENTITY.denormalize(IDENTITY.normalize(0.25))) == 0.25
