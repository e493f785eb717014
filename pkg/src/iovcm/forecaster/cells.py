"""LSTM and vanilla-RNN cells.

Gate order everywhere is (forget, input, output, cell candidate). For a batch
of inputs ``x`` with shape (B, D) and previous state (c, h) with shape (B, H)::

    f = sigmoid(W_x[0] x + W_h[0] h + b[0])
    i = sigmoid(W_x[1] x + W_h[1] h + b[1])
    o = sigmoid(W_x[2] x + W_h[2] h + b[2])
    g = tanh   (W_x[3] x + W_h[3] h + b[3])
    c' = i * g + f * c
    h' = o * tanh(c')
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch

FORGET, INPUT, OUTPUT, CELL = range(4)


def sigmoid(z):
    # tanh form: no overflow for large |z| and one ufunc call
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmLayerParams:
    W_x: np.ndarray  # (4, H, D)
    W_h: np.ndarray  # (4, H, H)
    b: np.ndarray    # (4, H)

    def __post_init__(self):
        if self.W_x.ndim != 3 or self.W_x.shape[0] != 4:
            raise DimensionMismatch(f"W_x must be (4, H, D), got {self.W_x.shape}")
        H, D = self.W_x.shape[1:]
        if self.W_h.shape != (4, H, H):
            raise DimensionMismatch(f"W_h must be (4, {H}, {H}), got {self.W_h.shape}")
        if self.b.shape != (4, H):
            raise DimensionMismatch(f"b must be (4, {H}), got {self.b.shape}")

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[2]

    @property
    def hidden_dim(self) -> int:
        return self.W_x.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.W_x, self.W_h, self.b]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmLayerParams":
        return cls(np.zeros((4, hidden_dim, input_dim)), np.zeros((4, hidden_dim, hidden_dim)),
                   np.zeros((4, hidden_dim)))

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
             forget_bias: float = 1.0) -> "LstmLayerParams":
        k = 1.0 / np.sqrt(hidden_dim)
        p = cls(rng.uniform(-k, k, (4, hidden_dim, input_dim)),
                rng.uniform(-k, k, (4, hidden_dim, hidden_dim)),
                rng.uniform(-k, k, (4, hidden_dim)))
        p.b[FORGET] = forget_bias
        return p

    @staticmethod
    def n_params(input_dim: int, hidden_dim: int) -> int:
        return 4 * (hidden_dim * input_dim + hidden_dim * hidden_dim + hidden_dim)


@dataclass
class LstmCellState:
    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: int | None = None) -> "LstmCellState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class GateTrace:
    """Everything one LSTM step needs for its backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_preactivation(params: LstmLayerParams, x, h_prev):
    H = params.hidden_dim
    z = x @ params.W_x.reshape(4 * H, -1).T + h_prev @ params.W_h.reshape(4 * H, H).T
    return z + params.b.reshape(4 * H)


def lstm_gates(z, c_prev):
    H = z.shape[-1] // 4
    s = sigmoid(z[..., :3 * H])
    f, i, o = s[..., :H], s[..., H:2 * H], s[..., 2 * H:]
    g = np.tanh(z[..., 3 * H:])
    c = i * g + f * c_prev
    return f, i, o, g, c


def cell_forward(params: LstmLayerParams, x_t, prev: LstmCellState):
    """One LSTM step; accepts a single vector or a (B, D) batch."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.input_dim:
        raise DimensionMismatch(f"input has dim {x_t.shape[-1]}, layer expects {params.input_dim}")
    if prev.h.shape[-1] != params.hidden_dim or prev.c.shape != prev.h.shape:
        raise DimensionMismatch("previous state does not match the layer's hidden size")
    z = lstm_preactivation(params, x_t, prev.h)
    f, i, o, g, c = lstm_gates(z, prev.c)
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmCellState(c, h), GateTrace(x_t, prev.h, prev.c, f, i, o, g, c, tanh_c)


@dataclass
class RnnLayerParams:
    """Elman cell: h' = tanh(W_x x + W_h h + b)."""

    W_x: np.ndarray  # (H, D)
    W_h: np.ndarray  # (H, H)
    b: np.ndarray    # (H,)

    def __post_init__(self):
        if self.W_x.ndim != 2:
            raise DimensionMismatch(f"W_x must be (H, D), got {self.W_x.shape}")
        H = self.W_x.shape[0]
        if self.W_h.shape != (H, H) or self.b.shape != (H,):
            raise DimensionMismatch("W_h/b shapes do not match W_x")

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_x.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.W_x, self.W_h, self.b]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "RnnLayerParams":
        return cls(np.zeros((hidden_dim, input_dim)), np.zeros((hidden_dim, hidden_dim)),
                   np.zeros(hidden_dim))

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "RnnLayerParams":
        k = 1.0 / np.sqrt(hidden_dim)
        return cls(rng.uniform(-k, k, (hidden_dim, input_dim)),
                   rng.uniform(-k, k, (hidden_dim, hidden_dim)),
                   rng.uniform(-k, k, hidden_dim))

    @staticmethod
    def n_params(input_dim: int, hidden_dim: int) -> int:
        return hidden_dim * input_dim + hidden_dim * hidden_dim + hidden_dim


def rnn_cell_forward(params: RnnLayerParams, x_t, h_prev):
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.input_dim:
        raise DimensionMismatch(f"input has dim {x_t.shape[-1]}, layer expects {params.input_dim}")
    return np.tanh(x_t @ params.W_x.T + h_prev @ params.W_h.T + params.b)
