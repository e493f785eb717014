import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iovcm.errors import DimensionMismatch
from iovcm.forecaster.cells import (LstmCellState, LstmLayerParams, RnnLayerParams, cell_forward,
                                    rnn_cell_forward)

from oracles import scalar_lstm_step


def test_all_zero_cell():
    p = LstmLayerParams.zeros(3, 4)
    state, tr = cell_forward(p, np.array([0.3, -2.0, 5.0]), LstmCellState.zeros(4))
    for gate in (tr.f, tr.i, tr.o):
        assert np.all(gate == 0.5)
    assert np.all(tr.g == 0) and np.all(state.c == 0) and np.all(state.h == 0)


def test_zero_weights_halve_cell_state():
    c0 = np.array([1.0, -2.0, 0.5])
    state, _ = cell_forward(LstmLayerParams.zeros(2, 3), np.ones(2), LstmCellState(c0, np.zeros(3)))
    np.testing.assert_allclose(state.c, 0.5 * c0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(state.h, 0.5 * np.tanh(0.5 * c0), rtol=0, atol=1e-15)


def test_scalar_oracle_1000_cases():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        wx, wh, b = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        x, h, c = rng.normal(size=3)
        p = LstmLayerParams(wx.reshape(4, 1, 1), wh.reshape(4, 1, 1), b.reshape(4, 1))
        state, _ = cell_forward(p, np.array([x]), LstmCellState(np.array([c]), np.array([h])))
        h_ref, c_ref, _ = scalar_lstm_step(wx, wh, b, x, h, c)
        worst = max(worst, abs(state.h[0] - h_ref), abs(state.c[0] - c_ref))
    assert worst <= 1e-12


def test_batched_matches_rowwise():
    rng = np.random.default_rng(0)
    p = LstmLayerParams.init(3, 5, rng)
    X, H, C = rng.normal(size=(7, 3)), rng.normal(size=(7, 5)), rng.normal(size=(7, 5))
    batch, _ = cell_forward(p, X, LstmCellState(C, H))
    for r in range(7):
        row, _ = cell_forward(p, X[r], LstmCellState(C[r], H[r]))
        np.testing.assert_allclose(batch.h[r], row.h, atol=1e-14)


def test_dimension_checks():
    p = LstmLayerParams.zeros(2, 3)
    with pytest.raises(DimensionMismatch):
        cell_forward(p, np.ones(4), LstmCellState.zeros(3))
    with pytest.raises(DimensionMismatch):
        cell_forward(p, np.ones(2), LstmCellState.zeros(5))
    with pytest.raises(DimensionMismatch):
        LstmLayerParams(np.zeros((4, 3, 2)), np.zeros((4, 2, 2)), np.zeros((4, 3)))


def test_init_ranges():
    p = LstmLayerParams.init(4, 16, np.random.default_rng(1))
    k = 1 / np.sqrt(16)
    assert np.all(np.abs(p.W_x) <= k) and np.all(np.abs(p.W_h) <= k)
    assert np.all(p.b[0] == 1.0) and np.all(np.abs(p.b[1:]) <= k)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3))
def test_gate_ranges(seed, scale):
    rng = np.random.default_rng(seed)
    p = LstmLayerParams(rng.uniform(-2, 2, (4, 3, 2)), rng.uniform(-2, 2, (4, 3, 3)),
                        rng.uniform(-2, 2, (4, 3)))
    state, tr = cell_forward(p, scale * rng.normal(size=(5, 2)),
                             LstmCellState(rng.uniform(-3, 3, (5, 3)), rng.uniform(-1, 1, (5, 3))))
    for gate in (tr.f, tr.i, tr.o):
        assert np.all((gate > 0) & (gate < 1))
    assert np.all(np.abs(tr.g) < 1) and np.all(np.abs(state.h) < 1)
    assert np.all(np.isfinite(state.c))


def test_rnn_zero_weights():
    b = np.array([0.3, -1.0])
    p = RnnLayerParams(np.zeros((2, 1)), np.zeros((2, 2)), b)
    h = np.zeros(2)
    for x in (0.0, 5.0, -3.0):
        h = rnn_cell_forward(p, np.array([x]), h)
        np.testing.assert_allclose(h, np.tanh(b), atol=1e-15)
