"""Proactive open-loop priority scheduling on top of the simulator engine.

Each slot the forecaster is fed the trailing CongDiff windows. If the forecast
for the next window exceeds the policy threshold, the transmit queue serves
critical packets first for that slot; otherwise it is strict arrival order.
Forecasts are never corrected within a run.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import clusterer
from .channel import MarkovChannel
from .errors import ConfigError, LengthMismatch
from .forecaster.training import Forecaster, predict_many
from .packet import SAFETY_MAX_BYTES
from .queueing import PacketClass, TransmitQueue
from .simulator import SimConfig, SimResult, SlotHook, run

OVERLOAD_FACTOR = 1.2


class Mode(str, enum.Enum):
    FIFO = "Fifo"
    PROACTIVE = "ProactivePriority"


@dataclass(frozen=True)
class SchedulerPolicy:
    mode: Mode = Mode.PROACTIVE
    congestion_threshold: float = math.inf
    horizon: int = 1

    def __post_init__(self):
        if not self.congestion_threshold >= 0:
            raise ConfigError("congestion_threshold must be >= 0")
        if self.horizon < 1:
            raise ConfigError("horizon must be a positive integer")


@dataclass(frozen=True)
class SlotReport:
    slot_index: int
    predicted_cong: float
    actual_cong: int | None
    priority_active: bool
    safety_sent: int
    safety_delivered: int
    normal_sent: int
    normal_delivered: int
    safety_delivery_ratio: float
    normal_delivery_ratio: float
    safety_mean_delay_s: float
    normal_mean_delay_s: float


REPORT_COLUMNS = [f.name for f in fields(SlotReport)]


def enqueue(queue: TransmitQueue, item, cls: PacketClass):
    """Tag ``item`` with its class and insert it; returns the overflow victim or None."""
    item.critical = cls is PacketClass.CRITICAL
    return queue.push(item)


class ProactiveHook(SlotHook):
    """Forecast-driven slot hook; records the forecast made at every slot."""

    def __init__(self, model: Forecaster, cluster_model: clusterer.ClusterModel,
                 policy: SchedulerPolicy):
        self.model = model
        self.cluster_model = cluster_model
        self.policy = policy
        self.predictions: list[float] = []
        self.targets: list[int] = []  # record index each forecast refers to
        self._n_seen = -1
        self._last = math.nan
        self._critical: dict[tuple[int, int], bool] = {}

    def begin_slot(self, slot_index, records) -> bool:
        n = len(records)
        L = self.model.seq_len
        if n != self._n_seen:
            self._n_seen = n
            if n >= L:
                recent = records[n - L:]
                window = np.array([[r.cong_diff for r in recent]], dtype=float)
                times = None
                if self.model.config.use_time_feature:
                    times = np.array([[r.cong_act_time_s for r in recent]])
                self._last = float(predict_many(self.model, window, times)[0])
            else:
                self._last = math.nan
        self.predictions.append(self._last)
        self.targets.append(n - 1 + self.policy.horizon)
        return (self.policy.mode is Mode.PROACTIVE and not math.isnan(self._last)
                and self._last > self.policy.congestion_threshold)

    def is_critical(self, item) -> bool:
        key = (item.ttl, item.priority)
        hit = self._critical.get(key)
        if hit is None:
            cls = clusterer.classify_features(self.cluster_model, item.ttl, item.priority)
            hit = self._critical[key] = cls is PacketClass.CRITICAL
        return hit


def slot_reports(result: SimResult, hook: ProactiveHook, config: SimConfig) -> list[SlotReport]:
    n = config.n_slots
    sent = np.zeros((n, 2), dtype=int)       # column 0 safety, 1 normal
    delivered = np.zeros((n, 2), dtype=int)
    delay = np.zeros((n, 2))
    for p in result.trace:
        t = min(int(p.gen_time_s // config.slot_duration_s), n - 1)
        c = 0 if p.size_bytes <= SAFETY_MAX_BYTES else 1
        sent[t, c] += 1
        if p.delivered:
            delivered[t, c] += 1
            delay[t, c] += p.delay_s
    ratio = np.divide(delivered, sent, out=np.zeros((n, 2)), where=sent > 0)
    mean_delay = np.divide(delay, delivered, out=np.zeros((n, 2)), where=delivered > 0)
    records = result.records
    out = []
    for t in range(n):
        j = hook.targets[t]
        actual = records[j].cong_diff if 0 <= j < len(records) else None
        out.append(SlotReport(
            t, hook.predictions[t], actual, result.slots[t].priority_active,
            int(sent[t, 0]), int(delivered[t, 0]), int(sent[t, 1]), int(delivered[t, 1]),
            float(ratio[t, 0]), float(ratio[t, 1]),
            float(mean_delay[t, 0]), float(mean_delay[t, 1])))
    return out


def run_managed(config: SimConfig, channel: MarkovChannel, model: Forecaster,
                cluster_model: clusterer.ClusterModel, policy: SchedulerPolicy,
                ) -> tuple[list[SlotReport], SimResult]:
    """One managed run; returns per-slot reports and the underlying simulation result."""
    hook = ProactiveHook(model, cluster_model, policy)
    result = run(config, channel, hook)
    return slot_reports(result, hook, config), result


def calibrate_capacity(config: SimConfig, channel: MarkovChannel, n_slots: int = 2000,
                       overload: float = OVERLOAD_FACTOR) -> int:
    """Capacity at which the busiest state's offered load is ``overload`` x capacity.

    Offered load is measured as packets served per slot with unlimited capacity,
    averaged over slots spent in the state with the highest drop rate.
    """
    probe = config.replace(slot_capacity_packets=0, n_slots=n_slots)
    res = run(probe, channel)
    worst = max(s.drop_rate for s in channel.states)
    served = [s.served for s in res.slots[:n_slots] if s.drop_rate == worst]
    if not served:
        served = [s.served for s in res.slots[:n_slots]]
    return max(1, int(round(float(np.mean(served)) / overload)))


# comparison

@dataclass(frozen=True)
class ClassSummary:
    sent: int
    delivery_ratio_a: float
    delivery_ratio_b: float
    mean_delay_a: float
    mean_delay_b: float

    @property
    def delivery_delta(self) -> float:
        return self.delivery_ratio_b - self.delivery_ratio_a

    @property
    def delay_delta(self) -> float:
        return self.mean_delay_b - self.mean_delay_a


@dataclass(frozen=True)
class PolicyComparison:
    safety: ClassSummary
    normal: ClassSummary
    prediction_rmse_a: float
    prediction_rmse_b: float
    n_predictions: int

    def rows(self) -> list[list]:
        out = [["class", "sent", "delivery_a", "delivery_b", "delivery_delta",
                "delay_a_s", "delay_b_s", "delay_delta_s"]]
        for name, c in (("safety", self.safety), ("normal", self.normal)):
            out.append([name, c.sent] + [f"{v:.6f}" for v in (
                c.delivery_ratio_a, c.delivery_ratio_b, c.delivery_delta,
                c.mean_delay_a, c.mean_delay_b, c.delay_delta)])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerows(self.rows())
        w.writerow(["prediction_rmse", self.n_predictions,
                    f"{self.prediction_rmse_a:.6f}", f"{self.prediction_rmse_b:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        rows = [[str(v) for v in r] for r in self.rows()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
        lines.append(f"prediction RMSE over {self.n_predictions} slots: "
                     f"a={self.prediction_rmse_a:.6f} b={self.prediction_rmse_b:.6f}")
        return "\n".join(lines) + "\n"


def _class_totals(reports, cls):
    sent = sum(getattr(r, f"{cls}_sent") for r in reports)
    delivered = sum(getattr(r, f"{cls}_delivered") for r in reports)
    delay = sum(getattr(r, f"{cls}_mean_delay_s") * getattr(r, f"{cls}_delivered") for r in reports)
    return sent, (delivered / sent if sent else 0.0), (delay / delivered if delivered else 0.0)


def prediction_rmse(reports) -> tuple[float, int]:
    pairs = [(r.predicted_cong, r.actual_cong) for r in reports
             if r.actual_cong is not None and not math.isnan(r.predicted_cong)]
    if not pairs:
        return math.nan, 0
    p, a = np.array(pairs, dtype=float).T
    return float(np.sqrt(np.mean((p - a) ** 2))), len(pairs)


def compare_policies(reports_a, reports_b) -> PolicyComparison:
    """Deltas are b minus a; delivery ratios are weighted by packets sent."""
    if len(reports_a) != len(reports_b):
        raise LengthMismatch(f"{len(reports_a)} vs {len(reports_b)} slot reports")
    summaries = {}
    for cls in ("safety", "normal"):
        sa, ra, da = _class_totals(reports_a, cls)
        sb, rb, db = _class_totals(reports_b, cls)
        if sa != sb:
            raise LengthMismatch(f"{cls} packet counts differ ({sa} vs {sb}); not a paired run")
        summaries[cls] = ClassSummary(sa, ra, rb, da, db)
    rmse_a, n = prediction_rmse(reports_a)
    rmse_b, _ = prediction_rmse(reports_b)
    return PolicyComparison(summaries["safety"], summaries["normal"], rmse_a, rmse_b, n)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return v


def write_reports(reports, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([_cell(getattr(r, c)) for c in REPORT_COLUMNS])
    return path
