import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iovcm.channel import default_channel, stationary_distribution
from iovcm.errors import ConfigError
from iovcm.packet import DropReason
from iovcm.simulator import (CongActDiffCounter, CongCounterState, SimConfig, congestion_flag, run,
                             update_cong_counter)

from oracles import cong_diff_trace

SMALL = SimConfig(n_slots=300, seed=4)


@pytest.fixture(scope="module")
def small_run():
    return run(SMALL, default_channel())


def counter_diffs(flags_at, n, pack_th=350):
    state, out = CongCounterState(), []
    for p in range(1, n + 1):
        state, closed = update_cong_counter(state, p in flags_at, float(p), pack_th)
        if closed:
            out.append(closed.cong_diff)
    return out


# window counter

def test_hand_traced_fixture():
    assert counter_diffs({10, 400, 700}, 700) == [1, 2]
    assert cong_diff_trace({10, 400, 700}, 700, 350) == [1, 2]


def test_no_flags_and_saturation():
    assert counter_diffs(set(), 350) == [0]
    assert counter_diffs(set(range(1, 1051)), 1050) == [350, 350, 350]


def test_activation_time_stamped_at_flag():
    state, _ = update_cong_counter(CongCounterState(), True, 12.5, 350)
    state, _ = update_cong_counter(state, False, 13.0, 350)
    assert state.cong_act_time_s == 12.5 and state.packs == 2 and state.cong_act == 1


@settings(max_examples=80, deadline=None)
@given(st.lists(st.booleans(), max_size=600), st.integers(1, 50))
def test_counter_twin_and_oracle_agree(flags, pack_th):
    pure, mut = CongCounterState(), CongActDiffCounter(pack_th)
    a, b = [], []
    for i, f in enumerate(flags):
        pure, closed = update_cong_counter(pure, f, float(i), pack_th)
        if closed:
            a.append(closed.cong_diff)
        d = mut.count(f, float(i))
        if d is not None:
            b.append(d)
        assert pure.cong_init <= pure.cong_act and 0 <= pure.packs < pack_th
    assert a == b == cong_diff_trace({i + 1 for i, f in enumerate(flags) if f}, len(flags), pack_th)
    assert mut.state == pure


def test_congestion_flag_rule():
    assert not congestion_flag(2, 3, False)
    assert congestion_flag(4, 3, False)
    assert not congestion_flag(4, 3, True)


# whole runs

def test_zero_slots_is_empty():
    res = run(SimConfig(n_slots=0), default_channel())
    assert res.records == [] and res.trace == []


def test_lossless_channel_delivers_everything():
    cfg = SimConfig(n_slots=200, ttl_initial=30, seed=2)
    res = run(cfg, default_channel(drop_rates=(0.0, 0.0, 0.0, 0.0)))
    assert res.records and all(r.delivery_ratio == 1.0 for r in res.records)
    assert all(p.delivered for p in res.trace)


def test_mean_drop_fraction_matches_stationary_expectation():
    ch = default_channel()
    res = run(SimConfig(n_slots=5000, seed=9), ch)
    expected = float(stationary_distribution(ch) @ ch.drop_rates)
    frac = np.mean([s.hop_dropped / s.hop_sent for s in res.slots[:5000] if s.hop_sent])
    assert abs(frac - expected) < 0.02


def test_every_packet_once_with_outcome(small_run):
    ids = [p.packet_id for p in small_run.trace]
    assert ids == list(range(len(ids)))
    assert sum(s.generated for s in small_run.slots) == len(ids)
    for p in small_run.trace:
        assert p.delivered == (p.drop_reason is DropReason.NONE)
        assert p.delay_s >= 0
        assert p.hop_count + p.ttl_remaining <= p.ttl_initial


def test_window_tiling_and_record_bounds(small_run):
    cfg = SMALL
    assert sum(r.packets_sent for r in small_run.records) + small_run.partial_window_packets \
        == small_run.total_hop_transmissions
    assert all(r.packets_sent == cfg.pack_th for r in small_run.records)
    for r in small_run.records:
        assert 0 <= r.cong_diff <= r.packets_sent
        assert r.packets_dropped <= r.packets_sent and 0.0 <= r.delivery_ratio <= 1.0
    assert sum(r.packets_dropped for r in small_run.records) <= sum(s.hop_dropped for s in small_run.slots)


def test_seed_determinism(small_run):
    again = run(SMALL, default_channel())
    assert again.records == small_run.records and again.trace == small_run.trace
    other = run(SMALL.replace(seed=5), default_channel())
    assert other.trace != small_run.trace


def test_caller_channel_not_advanced():
    ch = default_channel(initial_state=2)
    run(SimConfig(n_slots=50), ch)
    assert ch.current_state == 2


def test_monotone_stress_response():
    base = default_channel()
    stressed = default_channel(drop_rates=tuple(d + 0.1 for d in base.drop_rates))
    lost = lambda ch, seed: sum(not p.delivered for p in run(SimConfig(n_slots=150, seed=seed), ch).trace)
    seeds = range(10)
    assert sum(lost(stressed, s) for s in seeds) >= sum(lost(base, s) for s in seeds)


def test_capacity_is_work_conserving_and_bounded():
    cfg = SimConfig(n_slots=300, slot_capacity_packets=25, seed=3)
    res = run(cfg, default_channel())
    for s in res.slots:
        assert s.served <= 25
        if s.served < 25:
            assert s.backlog == 0
    assert any(s.backlog for s in res.slots)
    # waiting costs TTL, so no packet outlives its TTL budget in slots
    for p in res.trace:
        if p.delivered:
            assert p.delay_s < (cfg.ttl_initial + 1) * cfg.slot_duration_s


def test_bounded_queue_records_overflow():
    cfg = SimConfig(n_slots=100, slot_capacity_packets=10, queue_limit=5, seed=1)
    res = run(cfg, default_channel())
    assert any(p.drop_reason is DropReason.QUEUE_OVERFLOW for p in res.trace)


@pytest.mark.parametrize("field, value", [("n_vehicles", 1), ("pack_th", 0), ("n_slots", -1),
                                          ("p_safety", 1.5), ("cong_window_size", 0)])
def test_invalid_config(field, value):
    with pytest.raises(ConfigError):
        SimConfig(**{field: value}).validate()
