"""Packet headers, the size-based priority rule, and TTL handling."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

SAFETY_MAX_BYTES = 100
SAFETY_PRIORITIES = (1, 10)
NORMAL_PRIORITIES = (11, 20)

DEFAULT_TTL = 8
DEFAULT_P_SAFETY = 0.3
SAFETY_SIZE_RANGE = (40, 100)
NORMAL_SIZE_RANGE = (300, 1200)


class DropReason(str, enum.Enum):
    NONE = "None"
    CHANNEL_LOSS = "ChannelLoss"
    TTL_EXPIRED = "TtlExpired"
    # only produced when a bounded transmit queue overflows
    QUEUE_OVERFLOW = "QueueOverflow"


@dataclass(frozen=True, slots=True)
class PacketHeader:
    packet_id: int
    src: int
    dst: int
    size_bytes: int
    ttl: int
    priority: int = 0
    gen_time_s: float = 0.0
    hop_count: int = 0

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError(f"size_bytes must be positive, got {self.size_bytes}")
        if self.ttl < 0:
            raise ValueError(f"ttl must be non-negative, got {self.ttl}")

    @property
    def is_safety(self) -> bool:
        return self.size_bytes <= SAFETY_MAX_BYTES


@dataclass(frozen=True, slots=True)
class PacketOutcome:
    delivered: bool
    drop_reason: DropReason = DropReason.NONE
    delay_s: float = 0.0

    def __post_init__(self):
        if self.delivered and (self.drop_reason is not DropReason.NONE or self.delay_s < 0):
            raise ValueError("a delivered packet has no drop reason and a non-negative delay")


class _Expired:
    __slots__ = ()

    def __repr__(self):
        return "Expired"


#: Returned by :func:`decrement_ttl` when a packet arrives with TTL zero.
EXPIRED = _Expired()


def priority_range(size_bytes: int) -> tuple[int, int]:
    return SAFETY_PRIORITIES if size_bytes <= SAFETY_MAX_BYTES else NORMAL_PRIORITIES


def assign_priority(header: PacketHeader, rng: np.random.Generator) -> PacketHeader:
    """Stamp a priority: uniform 1..10 for packets of at most 100 bytes, else 11..20."""
    lo, hi = priority_range(header.size_bytes)
    return dataclasses.replace(header, priority=int(rng.integers(lo, hi + 1)))


def draw_priorities(sizes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`assign_priority` for a batch of packet sizes."""
    sizes = np.asarray(sizes)
    base = rng.integers(1, 11, size=sizes.shape)
    return np.where(sizes <= SAFETY_MAX_BYTES, base, base + 10)


def draw_sizes(n: int, p_safety: float, rng: np.random.Generator) -> np.ndarray:
    safety = rng.random(n) < p_safety
    small = rng.integers(SAFETY_SIZE_RANGE[0], SAFETY_SIZE_RANGE[1] + 1, size=n)
    large = rng.integers(NORMAL_SIZE_RANGE[0], NORMAL_SIZE_RANGE[1] + 1, size=n)
    return np.where(safety, small, large)


def decrement_ttl(header: PacketHeader) -> PacketHeader | _Expired:
    """Forward one hop. A packet that arrives with TTL zero is not forwarded."""
    if header.ttl == 0:
        return EXPIRED
    return dataclasses.replace(header, ttl=header.ttl - 1, hop_count=header.hop_count + 1)


def criticality_features(header: PacketHeader) -> np.ndarray:
    return np.array([float(header.ttl), float(header.priority)])


def feature_matrix(headers) -> np.ndarray:
    """Stack ``(ttl, priority)`` rows for a sequence of headers, preserving order."""
    headers = list(headers)
    if not headers:
        return np.empty((0, 2))
    return np.array([[float(h.ttl), float(h.priority)] for h in headers])
