"""Stacked recurrent networks with an affine output head, and exact BPTT.

Sequences are time-major: ``xs`` has shape (T, B, D) and predictions (T, B).
A (T, D) input is treated as a batch of one and yields predictions of shape (T,).
Initial hidden and cell states are zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, TraceMismatch
from .cells import LstmLayerParams, RnnLayerParams, lstm_gates

LSTM = "lstm"
RNN = "rnn"


@dataclass
class OutputHead:
    w: np.ndarray  # (H,)
    b: np.ndarray  # (1,)

    def arrays(self):
        return [self.w, self.b]


@dataclass
class LayerTrace:
    inputs: np.ndarray   # (T, B, D)
    h: np.ndarray        # (T+1, B, H), h[0] is the initial state
    c: np.ndarray | None = None
    gates: np.ndarray | None = None  # (T, B, 4H) post-activation f, i, o, g
    tanh_c: np.ndarray | None = None


@dataclass
class SequenceTrace:
    net_id: int
    kind: str
    xs: np.ndarray
    layers: list[LayerTrace]
    squeeze: bool = False


@dataclass
class Gradients:
    layers: list[list[np.ndarray]]
    head: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer] + self.head

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))


@dataclass
class RecurrentNet:
    """Common surface for the stacked LSTM and the tanh-RNN baseline."""

    layers: list
    output_head: OutputHead
    kind: str = LSTM
    _id: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        if not self.layers:
            raise DimensionMismatch("a network needs at least one layer")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.input_dim != lower.hidden_dim:
                raise DimensionMismatch(
                    f"layer input {upper.input_dim} does not match previous hidden {lower.hidden_dim}")
        if self.output_head.w.shape != (self.layers[-1].hidden_dim,):
            raise DimensionMismatch("output head does not match the last hidden size")
        self._id = id(self)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.hidden_dim for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.arrays()] + self.output_head.arrays()

    def n_params(self) -> int:
        return int(sum(a.size for a in self.parameters()))

    def copy(self) -> "RecurrentNet":
        cls = type(self.layers[0])
        layers = [cls(*(a.copy() for a in layer.arrays())) for layer in self.layers]
        return type(self)(layers, OutputHead(self.output_head.w.copy(), self.output_head.b.copy()),
                          self.kind)

    def forward(self, xs):
        return forward_sequence(self, xs)


class StackedLstm(RecurrentNet):
    def __init__(self, layers, output_head, kind=LSTM):
        super().__init__(layers, output_head, LSTM)

    @classmethod
    def init(cls, input_dim: int, hidden_sizes, rng: np.random.Generator,
             forget_bias: float = 1.0) -> "StackedLstm":
        layers, d = [], input_dim
        for h in hidden_sizes:
            layers.append(LstmLayerParams.init(d, h, rng, forget_bias))
            d = h
        return cls(layers, _init_head(d, rng))

    @classmethod
    def zeros(cls, input_dim: int, hidden_sizes) -> "StackedLstm":
        dims = [input_dim, *hidden_sizes]
        layers = [LstmLayerParams.zeros(a, b) for a, b in zip(dims, dims[1:])]
        return cls(layers, OutputHead(np.zeros(dims[-1]), np.zeros(1)))


class VanillaRnn(RecurrentNet):
    def __init__(self, layers, output_head, kind=RNN):
        super().__init__(layers, output_head, RNN)

    @classmethod
    def init(cls, input_dim: int, hidden_sizes, rng: np.random.Generator) -> "VanillaRnn":
        layers, d = [], input_dim
        for h in hidden_sizes:
            layers.append(RnnLayerParams.init(d, h, rng))
            d = h
        return cls(layers, _init_head(d, rng))

    @classmethod
    def zeros(cls, input_dim: int, hidden_sizes) -> "VanillaRnn":
        dims = [input_dim, *hidden_sizes]
        layers = [RnnLayerParams.zeros(a, b) for a, b in zip(dims, dims[1:])]
        return cls(layers, OutputHead(np.zeros(dims[-1]), np.zeros(1)))


def _init_head(hidden: int, rng) -> OutputHead:
    k = 1.0 / np.sqrt(hidden)
    return OutputHead(rng.uniform(-k, k, hidden), np.zeros(1))


def build_net(kind: str, input_dim: int, hidden_sizes, rng) -> RecurrentNet:
    if kind == LSTM:
        return StackedLstm.init(input_dim, hidden_sizes, rng)
    if kind == RNN:
        return VanillaRnn.init(input_dim, hidden_sizes, rng)
    raise ValueError(f"unknown network kind {kind!r}")


def count_params(kind: str, input_dim: int, hidden_sizes) -> int:
    """Closed-form parameter count, head included."""
    per_layer = LstmLayerParams.n_params if kind == LSTM else RnnLayerParams.n_params
    total, d = 0, input_dim
    for h in hidden_sizes:
        total += per_layer(d, h)
        d = h
    return total + d + 1


# forward

def _lstm_layer_forward(p: LstmLayerParams, inputs):
    T, B, _ = inputs.shape
    H = p.hidden_dim
    Wh = np.ascontiguousarray(p.W_h.reshape(4 * H, H).T)
    zx = inputs @ p.W_x.reshape(4 * H, -1).T + p.b.reshape(4 * H)  # all steps at once
    h = np.zeros((T + 1, B, H))
    c = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    for t in range(T):
        z = zx[t] + h[t] @ Wh
        f, i, o, g, c[t + 1] = lstm_gates(z, c[t])
        gates[t, :, :H], gates[t, :, H:2 * H], gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:] = f, i, o, g
        h[t + 1] = o * np.tanh(c[t + 1])
    return LayerTrace(inputs, h, c, gates, np.tanh(c[1:]))


def _rnn_layer_forward(p: RnnLayerParams, inputs):
    T, B, _ = inputs.shape
    zx = inputs @ p.W_x.T + p.b
    h = np.zeros((T + 1, B, p.hidden_dim))
    Wh = np.ascontiguousarray(p.W_h.T)
    for t in range(T):
        h[t + 1] = np.tanh(zx[t] + h[t] @ Wh)
    return LayerTrace(inputs, h)


def forward_sequence(net: RecurrentNet, xs):
    """Run the stack over ``xs``; returns (predictions, trace)."""
    xs = np.asarray(xs, dtype=float)
    squeeze = xs.ndim == 2
    if squeeze:
        xs = xs[:, None, :]
    if xs.ndim != 3 or xs.shape[0] == 0:
        raise DimensionMismatch(f"expected a nonempty (T, B, D) sequence, got shape {xs.shape}")
    if xs.shape[2] != net.input_dim:
        raise DimensionMismatch(f"input dim {xs.shape[2]} does not match network input {net.input_dim}")
    step = _lstm_layer_forward if net.kind == LSTM else _rnn_layer_forward
    traces, inputs = [], xs
    for layer in net.layers:
        tr = step(layer, inputs)
        traces.append(tr)
        inputs = tr.h[1:]
    preds = inputs @ net.output_head.w + net.output_head.b[0]
    trace = SequenceTrace(net._id, net.kind, xs, traces, squeeze)
    return (preds[:, 0] if squeeze else preds), trace


# backward

def _lstm_layer_backward(p: LstmLayerParams, tr: LayerTrace, dh_out):
    T, B, H = dh_out.shape
    Wh = p.W_h.reshape(4 * H, H)
    g_all = tr.gates
    dZ = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        f, i, o, g = (g_all[t, :, k * H:(k + 1) * H] for k in range(4))
        tc = tr.tanh_c[t]
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dZ[t, :, :H] = dc * tr.c[t] * f * (1.0 - f)
        dZ[t, :, H:2 * H] = dc * g * i * (1.0 - i)
        dZ[t, :, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dZ[t, :, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dZ[t] @ Wh
    flat = dZ.reshape(T * B, 4 * H)
    D = p.input_dim
    dWx = (flat.T @ tr.inputs.reshape(T * B, D)).reshape(4, H, D)
    dWh = (flat.T @ tr.h[:-1].reshape(T * B, H)).reshape(4, H, H)
    db = flat.sum(axis=0).reshape(4, H)
    d_inputs = dZ @ p.W_x.reshape(4 * H, D)
    return [dWx, dWh, db], d_inputs


def _rnn_layer_backward(p: RnnLayerParams, tr: LayerTrace, dh_out):
    T, B, H = dh_out.shape
    dZ = np.empty((T, B, H))
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h = tr.h[t + 1]
        dZ[t] = (dh_out[t] + dh_next) * (1.0 - h * h)
        dh_next = dZ[t] @ p.W_h
    flat = dZ.reshape(T * B, H)
    dWx = flat.T @ tr.inputs.reshape(T * B, -1)
    dWh = flat.T @ tr.h[:-1].reshape(T * B, H)
    return [dWx, dWh, flat.sum(axis=0)], dZ @ p.W_x


def backward(net: RecurrentNet, trace: SequenceTrace, dpred) -> Gradients:
    """Gradients of a loss given dL/dprediction at every step.

    ``dpred`` has the shape of the predictions returned by ``forward_sequence``.
    """
    if trace.net_id != net._id or trace.kind != net.kind or len(trace.layers) != len(net.layers):
        raise TraceMismatch("trace was not produced by this network")
    dpred = np.asarray(dpred, dtype=float)
    if trace.squeeze:
        dpred = dpred[:, None] if dpred.ndim == 1 else dpred
    T, B = trace.xs.shape[:2]
    if dpred.shape != (T, B):
        raise TraceMismatch(f"loss gradient shape {dpred.shape} does not match trace ({T}, {B})")
    top = trace.layers[-1].h[1:]
    head = [np.tensordot(dpred, top, axes=([0, 1], [0, 1])), np.array([dpred.sum()])]
    dh = dpred[:, :, None] * net.output_head.w
    step = _lstm_layer_backward if net.kind == LSTM else _rnn_layer_backward
    grads = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        grads[k], dh = step(net.layers[k], trace.layers[k], dh)
    return Gradients(grads, head)


def last_step_mse(preds, targets, reduction: str = "mean"):
    """Loss on the final step of each sequence and its gradient w.r.t. all predictions."""
    preds = np.asarray(preds, dtype=float)
    err = preds[-1] - targets
    scale = 1.0 / err.size if reduction == "mean" else 1.0
    dpred = np.zeros_like(preds)
    dpred[-1] = 2.0 * scale * err
    return float(scale * np.sum(err * err)), dpred
