"""JSON checkpoints for trained forecasters.

Arrays are stored flattened in row-major order next to their shapes. JSON
floats round-trip exactly, so a reloaded model predicts bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .cells import LstmLayerParams, RnnLayerParams
from .network import LSTM, OutputHead, StackedLstm, VanillaRnn
from .training import EpochMetrics, Forecaster, MinMaxScaler, TrainConfig

FORMAT_TAG = "iovcm-forecaster"
FORMAT_VERSION = 1


def _pack(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _unpack(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def to_dict(model: Forecaster) -> dict:
    net = model.net
    return {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "kind": net.kind,
        "input_dim": net.input_dim,
        "hidden_sizes": net.hidden_sizes,
        "layers": [{k: _pack(a) for k, a in zip(("W_x", "W_h", "b"), layer.arrays())}
                   for layer in net.layers],
        "head": {"w": _pack(net.output_head.w), "b": _pack(net.output_head.b)},
        "normalization": {"min": model.scaler.lo, "max": model.scaler.hi},
        "train_config": model.config.to_dict(),
        "threshold_auto": model.threshold_auto,
        "history": [vars(m) for m in model.history],
    }


def from_dict(d: dict) -> Forecaster:
    if d.get("format") != FORMAT_TAG:
        raise CheckpointError(f"not a forecaster checkpoint (format tag {d.get('format')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {d.get('version')!r}")
    try:
        layer_cls, net_cls = ((LstmLayerParams, StackedLstm) if d["kind"] == LSTM
                              else (RnnLayerParams, VanillaRnn))
        layers = [layer_cls(_unpack(L["W_x"]), _unpack(L["W_h"]), _unpack(L["b"]))
                  for L in d["layers"]]
        net = net_cls(layers, OutputHead(_unpack(d["head"]["w"]), _unpack(d["head"]["b"])))
        if net.hidden_sizes != list(d["hidden_sizes"]) or net.input_dim != d["input_dim"]:
            raise CheckpointError("stored dimensions disagree with stored parameters")
        cfg = TrainConfig(**d["train_config"])
        scaler = MinMaxScaler(float(d["normalization"]["min"]), float(d["normalization"]["max"]))
        history = [EpochMetrics(**m) for m in d.get("history", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    return Forecaster(net, scaler, cfg, float(d.get("threshold_auto", float("nan"))), history)


def save(model: Forecaster, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_dict(model)), encoding="utf-8")
    return path


def load(path) -> Forecaster:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc.msg})") from None
    return from_dict(d)
