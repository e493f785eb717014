"""Slotted multi-hop packet simulation and the CongActDiff counter.

Every slot the channel advances one Markov step, vehicles generate packets,
and the transmit queue serves packets up to the slot capacity. A served packet
walks its remaining hops; each hop spends one unit of TTL and is dropped with
the current state's drop rate. A lost hop is retried from the same relay in the
next slot, up to ``max_retx`` times.

Each hop transmission is one packet event for the CongActDiff counter. A
source raises the congestion flag when its sliding window of recent hop
transmissions holds more than ``cong_window_threshold`` retransmissions, and
the activation counts only on a non-retransmitted event. Every ``pack_th``
events the counter closes a window and emits one :class:`CongestionRecord`.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import packet as pk
from .channel import MarkovChannel, step
from .errors import ConfigError
from .packet import DropReason
from .queueing import TransmitQueue

log = logging.getLogger(__name__)


@dataclass
class SimConfig:
    n_vehicles: int = 150
    speed_kmh: float = 25.0
    packets_per_vehicle_per_slot: float = 0.2
    n_slots: int = 20_000
    slot_duration_s: float = 1.0
    pack_th: int = 350
    cong_window_threshold: int = 0
    # sliding per-source window, in hop transmissions
    cong_window_size: int = 5
    ttl_initial: int = pk.DEFAULT_TTL
    p_safety: float = pk.DEFAULT_P_SAFETY
    max_retx: int = 3
    # 0 means unlimited for both
    slot_capacity_packets: int = 0
    queue_limit: int = 0
    base_hop_delay_s: float = 0.002
    retx_hop_delay_s: float = 0.010
    seed: int = 1

    def validate(self) -> "SimConfig":
        positive = ("n_vehicles", "packets_per_vehicle_per_slot", "slot_duration_s",
                    "pack_th", "cong_window_size", "ttl_initial")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        non_negative = ("n_slots", "speed_kmh", "cong_window_threshold", "max_retx",
                        "slot_capacity_packets", "queue_limit", "base_hop_delay_s",
                        "retx_hop_delay_s")
        for name in non_negative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.n_vehicles < 2:
            raise ConfigError("need at least two vehicles")
        if not 0.0 <= self.p_safety <= 1.0:
            raise ConfigError(f"p_safety must be in [0, 1], got {self.p_safety}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        return self

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class CongestionRecord:
    slot_index: int
    cong_act_time_s: float
    cong_diff: int
    state_label: str
    packets_sent: int
    packets_dropped: int
    delivery_ratio: float


@dataclass(frozen=True)
class PacketRecord:
    """One row of the packet trace: final header fields plus the outcome."""

    packet_id: int
    src: int
    dst: int
    size_bytes: int
    ttl_initial: int
    ttl_remaining: int
    priority: int
    gen_time_s: float
    hop_count: int
    delivered: bool
    drop_reason: DropReason
    delay_s: float

    @property
    def is_safety(self) -> bool:
        return self.size_bytes <= pk.SAFETY_MAX_BYTES

    def header(self, ttl: int | None = None) -> pk.PacketHeader:
        return pk.PacketHeader(self.packet_id, self.src, self.dst, self.size_bytes,
                               self.ttl_remaining if ttl is None else ttl,
                               self.priority, self.gen_time_s, self.hop_count)

    @property
    def outcome(self) -> pk.PacketOutcome:
        return pk.PacketOutcome(self.delivered, self.drop_reason, self.delay_s)


@dataclass(frozen=True)
class SlotStats:
    slot_index: int
    state_label: str
    drop_rate: float
    hop_sent: int
    hop_dropped: int
    generated: int
    served: int = 0
    priority_active: bool = False
    # packets still waiting when service stopped for the slot
    backlog: int = 0


@dataclass
class SimResult:
    records: list[CongestionRecord]
    trace: list[PacketRecord]
    slots: list[SlotStats]
    partial_window_packets: int = 0

    @property
    def total_hop_transmissions(self) -> int:
        return sum(s.hop_sent for s in self.slots)


# --- CongActDiff counter ---------------------------------------------------


@dataclass(frozen=True)
class CongCounterState:
    cong_act: int = 0
    cong_init: int = 0
    packs: int = 0
    cong_act_time_s: float = 0.0


@dataclass(frozen=True)
class WindowClose:
    cong_diff: int
    cong_act_time_s: float
    clock_s: float


def congestion_flag(retx_in_window: int, threshold: int, is_retransmission: bool) -> bool:
    """True when this event counts as one congestion-flag activation.

    The flag is up when the source's retransmission count in its current
    window exceeds ``threshold``; retransmitted packets never count.
    """
    return retx_in_window > threshold and not is_retransmission


def update_cong_counter(counter: CongCounterState, flag: bool, clock_s: float,
                        pack_th: int) -> tuple[CongCounterState, WindowClose | None]:
    cong_act, act_time = counter.cong_act, counter.cong_act_time_s
    if flag:
        cong_act += 1
        act_time = clock_s
    packs = counter.packs + 1
    if packs == pack_th:
        closed = WindowClose(cong_act - counter.cong_init, act_time, clock_s)
        return CongCounterState(cong_act, cong_act, 0, act_time), closed
    return CongCounterState(cong_act, counter.cong_init, packs, act_time), None


class CongActDiffCounter:
    """Mutable twin of :func:`update_cong_counter` used inside the event loop."""

    __slots__ = ("pack_th", "cong_act", "cong_init", "packs", "cong_act_time_s")

    def __init__(self, pack_th: int):
        self.pack_th = pack_th
        self.cong_act = 0
        self.cong_init = 0
        self.packs = 0
        self.cong_act_time_s = 0.0

    def count(self, flag: bool, clock_s: float) -> int | None:
        """Register one packet event; return CongDiff when a window closes."""
        if flag:
            self.cong_act += 1
            self.cong_act_time_s = clock_s
        self.packs += 1
        if self.packs == self.pack_th:
            diff = self.cong_act - self.cong_init
            self.cong_init = self.cong_act
            self.packs = 0
            return diff
        return None

    @property
    def state(self) -> CongCounterState:
        return CongCounterState(self.cong_act, self.cong_init, self.packs, self.cong_act_time_s)


class SourceWindow:
    """Sliding record of a source's last ``size`` hop transmissions."""

    __slots__ = ("_hist", "retx")

    def __init__(self, size: int):
        self._hist = deque(maxlen=size)
        self.retx = 0

    def push(self, is_retx: bool) -> None:
        h = self._hist
        if len(h) == h.maxlen and h[0]:
            self.retx -= 1
        h.append(is_retx)
        if is_retx:
            self.retx += 1


# --- event loop ------------------------------------------------------------


class InFlight:
    """Mutable per-packet state while a packet is queued or in transit."""

    __slots__ = ("packet_id", "src", "dst", "size", "priority", "gen_time", "gen_slot",
                 "ttl", "hop_count", "remaining_hops", "uniforms", "attempt", "retx",
                 "is_retx", "ready_time", "seq", "critical")

    def __init__(self, packet_id, src, dst, size, priority, gen_time, gen_slot, ttl,
                 path_len, uniforms):
        self.packet_id = packet_id
        self.src = src
        self.dst = dst
        self.size = size
        self.priority = priority
        self.gen_time = gen_time
        self.gen_slot = gen_slot
        self.ttl = ttl
        self.hop_count = 0
        self.remaining_hops = path_len
        self.uniforms = uniforms
        self.attempt = 0
        self.retx = 0
        self.is_retx = False
        self.ready_time = gen_time
        self.seq = 0
        self.critical = False

    def header(self) -> pk.PacketHeader:
        return pk.PacketHeader(self.packet_id, self.src, self.dst, self.size, self.ttl,
                               self.priority, self.gen_time, self.hop_count)


class SlotHook:
    """Extension points used by the managed scheduler. The base class is FIFO."""

    def begin_slot(self, slot_index: int, records: list[CongestionRecord]) -> bool:
        """Return True to serve this slot in priority order."""
        return False

    def is_critical(self, item: InFlight) -> bool:
        return False


def _rng_streams(seed: int):
    chan_ss, traffic_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(chan_ss), np.random.default_rng(traffic_ss)


def run(config: SimConfig, channel: MarkovChannel, hook: SlotHook | None = None) -> SimResult:
    """Simulate ``config.n_slots`` slots plus the drain needed to settle every packet.

    ``channel`` is copied; the caller's instance is not advanced.
    """
    config.validate()
    hook = hook or SlotHook()
    channel = channel.copy()
    rng_chan, rng = _rng_streams(config.seed)

    dt = config.slot_duration_s
    ttl0 = config.ttl_initial
    cap = config.slot_capacity_packets or math.inf
    thr = config.cong_window_threshold
    max_retx = config.max_retx
    base_delay = config.base_hop_delay_s
    retx_delay = config.retx_hop_delay_s
    mean_new = config.n_vehicles * config.packets_per_vehicle_per_slot

    counter = CongActDiffCounter(config.pack_th)
    windows = [SourceWindow(config.cong_window_size) for _ in range(config.n_vehicles)]
    retx_backlog = [0] * config.n_vehicles
    queue = TransmitQueue(limit=config.queue_limit)

    records: list[CongestionRecord] = []
    trace: dict[int, PacketRecord] = {}
    slots: list[SlotStats] = []
    next_slot: list[InFlight] = []  # retransmissions due next slot
    seq = 0
    next_id = 0
    win_sent = win_dropped = 0

    def finish(item: InFlight, delivered: bool, reason: DropReason, delay: float):
        trace[item.packet_id] = PacketRecord(
            item.packet_id, item.src, item.dst, item.size, ttl0, item.ttl, item.priority,
            round(item.gen_time, 6), item.hop_count, delivered, reason, round(delay, 6))

    t = 0
    while t < config.n_slots or next_slot or len(queue):
        slot_start = t * dt
        state = step(channel, rng_chan)
        drop_rate = state.drop_rate
        active = bool(hook.begin_slot(t, records))
        queue.set_priority_mode(active)
        queue.resort()

        arrivals = next_slot
        next_slot = []
        n_new = 0
        if t < config.n_slots:
            n_new = int(rng.poisson(mean_new))
            srcs = rng.integers(0, config.n_vehicles, size=n_new)
            # dst uniform over the other vehicles
            dsts = rng.integers(0, config.n_vehicles - 1, size=n_new)
            dsts = dsts + (dsts >= srcs)
            sizes = pk.draw_sizes(n_new, config.p_safety, rng)
            prios = pk.draw_priorities(sizes, rng)
            paths = rng.integers(1, ttl0 + 1, size=n_new)
            offsets = np.sort(rng.random(n_new))
            uniforms = rng.random((n_new, ttl0))
            for i in range(n_new):
                g = slot_start + float(offsets[i]) * dt
                arrivals.append(InFlight(next_id, int(srcs[i]), int(dsts[i]), int(sizes[i]),
                                         int(prios[i]), g, t, ttl0, int(paths[i]), uniforms[i]))
                next_id += 1
        arrivals.sort(key=lambda it: it.ready_time)

        hop_sent = hop_dropped = 0
        served = 0
        ai = 0
        clock = slot_start
        n_arr = len(arrivals)

        def admit(item):
            nonlocal seq
            item.seq = seq
            seq += 1
            item.critical = hook.is_critical(item)
            evicted = queue.push(item)
            if evicted is not None:
                if evicted.is_retx:
                    retx_backlog[evicted.src] -= 1
                finish(evicted, False, DropReason.QUEUE_OVERFLOW, 0.0)

        while served < cap:
            if not len(queue):
                if ai >= n_arr:
                    break
                clock = max(clock, arrivals[ai].ready_time)
            while ai < n_arr and arrivals[ai].ready_time <= clock:
                admit(arrivals[ai])
                ai += 1
            if not len(queue):
                continue
            item = queue.pop()
            served += 1

            # transmit along the remaining hops
            src = item.src
            win = windows[src]
            first_is_retx = item.is_retx
            if first_is_retx:
                retx_backlog[src] -= 1
                item.is_retx = False
            hop_clock = clock
            while True:
                if item.remaining_hops == 0:
                    finish(item, True, DropReason.NONE, hop_clock - item.gen_time)
                    break
                if item.ttl == 0:
                    finish(item, False, DropReason.TTL_EXPIRED, 0.0)
                    break
                flag = congestion_flag(win.retx, thr, first_is_retx)
                win.push(first_is_retx)
                first_is_retx = False
                item.ttl -= 1
                item.hop_count += 1
                u = item.uniforms[item.attempt]
                item.attempt += 1
                hop_clock += base_delay + retx_delay * retx_backlog[src]
                dropped = u < drop_rate
                hop_sent += 1
                win_sent += 1
                if dropped:
                    hop_dropped += 1
                    win_dropped += 1
                diff = counter.count(flag, hop_clock)
                if diff is not None:
                    records.append(CongestionRecord(
                        t, round(hop_clock, 6), diff, state.label, win_sent, win_dropped,
                        round((win_sent - win_dropped) / win_sent, 6)))
                    win_sent = win_dropped = 0
                if dropped:
                    if item.retx < max_retx:
                        item.retx += 1
                        item.is_retx = True
                        retx_backlog[src] += 1
                        nxt = slot_start + dt
                        item.ready_time = min(max(hop_clock + dt, nxt), nxt + dt * (1 - 1e-9))
                        next_slot.append(item)
                    else:
                        finish(item, False, DropReason.CHANNEL_LOSS, 0.0)
                    break
                item.remaining_hops -= 1

            if cap != math.inf:
                clock = max(clock, slot_start + served * dt / cap)

        # packets left over wait one slot and spend one TTL unit doing so
        while ai < n_arr:
            admit(arrivals[ai])
            ai += 1
        backlog = len(queue)
        if len(queue):
            keep = []
            for item in queue.drain():
                item.ttl -= 1
                if item.ttl <= 0:
                    item.ttl = 0
                    if item.is_retx:
                        retx_backlog[item.src] -= 1
                    finish(item, False, DropReason.TTL_EXPIRED, 0.0)
                else:
                    keep.append(item)
            for item in keep:
                queue.push(item)

        slots.append(SlotStats(t, state.label, drop_rate, hop_sent, hop_dropped, n_new, served,
                               active, backlog))
        t += 1

    if counter.packs:
        log.info("discarding final partial CongActDiff window of %d packets", counter.packs)
    ordered = [trace[i] for i in range(next_id)]
    return SimResult(records, ordered, slots, counter.packs)
