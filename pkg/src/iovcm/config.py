"""Run configuration files.

A configuration is a line-oriented ``key = value`` text file. Blank lines and
``#`` comments are ignored; unknown keys are an error. Channel keys::

    drop_rates   = 0.1, 0.35, 0.2, 0.3
    state_labels = low, high, mid, busy
    transition   = 0.85 0.05 0.05 0.05; 0.05 0.85 0.05 0.05; ...
    initial_state = 0

Every :class:`~iovcm.simulator.SimConfig` field is also a valid key.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .channel import (DEFAULT_DROP_RATES, CongestionState, MarkovChannel, default_channel)
from .errors import ConfigError
from .simulator import SimConfig

CHANNEL_KEYS = ("drop_rates", "state_labels", "transition", "initial_state")
_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SIM_FIELDS and key not in CHANNEL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _coerce(name: str, value: str):
    kind = type(getattr(SimConfig(), name))
    try:
        if kind is int:
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r} as {kind.__name__}") from None


def _floats(name: str, value: str) -> list[float]:
    try:
        return [float(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{name}: expected numbers, got {value!r}") from None


def build(values: dict[str, str]) -> tuple[SimConfig, MarkovChannel]:
    sim_kwargs = {k: _coerce(k, v) for k, v in values.items() if k in _SIM_FIELDS}
    cfg = SimConfig(**sim_kwargs).validate()

    rates = _floats("drop_rates", values["drop_rates"]) if "drop_rates" in values \
        else list(DEFAULT_DROP_RATES)
    init = int(values.get("initial_state", 0))
    if "transition" in values:
        rows = [r for r in values["transition"].split(";") if r.strip()]
        P = np.array([_floats("transition", r) for r in rows])
    else:
        P = default_channel(rates).transition
    if "state_labels" in values:
        labels = [s.strip() for s in values["state_labels"].split(",")]
    else:
        labels = [f"s{i}" for i in range(len(rates))]
    if len(labels) != len(rates):
        raise ConfigError("state_labels and drop_rates differ in length")
    channel = MarkovChannel([CongestionState(d, lab) for d, lab in zip(rates, labels)], P, init)
    return cfg, channel


def load(path) -> tuple[SimConfig, MarkovChannel]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build(parse_text(text, str(path)))


def dump(cfg: SimConfig, channel: MarkovChannel) -> str:
    """Serialize back to the ``key = value`` format; ``load`` inverts it."""
    lines = [f"{f} = {getattr(cfg, f)}" for f in _SIM_FIELDS]
    lines.append("drop_rates = " + ", ".join(repr(s.drop_rate) for s in channel.states))
    lines.append("state_labels = " + ", ".join(s.label for s in channel.states))
    lines.append("transition = " + "; ".join(" ".join(repr(float(x)) for x in row)
                                             for row in channel.transition))
    lines.append(f"initial_state = {channel.current_state}")
    return "\n".join(lines) + "\n"
