"""CSV files for the congestion dataset and the packet header trace."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .packet import DropReason
from .simulator import CongestionRecord, PacketRecord

CONGESTION_FILE = "congestion.csv"
PACKETS_FILE = "packets.csv"

CONGESTION_COLUMNS = ["slot_index", "cong_act_time_s", "cong_diff", "state_label",
                      "packets_sent", "packets_dropped", "delivery_ratio"]
PACKET_COLUMNS = ["packet_id", "src", "dst", "size_bytes", "ttl_initial", "ttl_remaining",
                  "priority", "gen_time_s", "hop_count", "delivered", "drop_reason", "delay_s"]


def _f(x: float) -> str:
    return f"{x:.6f}"


def write_congestion(records, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONGESTION_COLUMNS)
        for r in records:
            w.writerow([r.slot_index, _f(r.cong_act_time_s), r.cong_diff, r.state_label,
                        r.packets_sent, r.packets_dropped, _f(r.delivery_ratio)])
    return path


def write_packets(trace, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PACKET_COLUMNS)
        for p in trace:
            w.writerow([p.packet_id, p.src, p.dst, p.size_bytes, p.ttl_initial, p.ttl_remaining,
                        p.priority, _f(p.gen_time_s), p.hop_count, int(p.delivered),
                        p.drop_reason.value, _f(p.delay_s)])
    return path


def export_dataset(records, trace, out_dir) -> tuple[Path, Path]:
    """Write ``congestion.csv`` and ``packets.csv`` into ``out_dir``.

    Raises OSError when the directory cannot be created or written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return write_congestion(records, out / CONGESTION_FILE), write_packets(trace, out / PACKETS_FILE)


def _check_header(reader, expected, path):
    header = next(reader, None)
    if header != expected:
        raise ValueError(f"{path}: unexpected header {header!r}")


def read_congestion(path) -> list[CongestionRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        _check_header(rd, CONGESTION_COLUMNS, path)
        return [CongestionRecord(int(r[0]), float(r[1]), int(r[2]), r[3], int(r[4]),
                                 int(r[5]), float(r[6])) for r in rd]


def read_cong_diff(path) -> np.ndarray:
    """Only the CongDiff column, as floats, in file order."""
    return np.array([r.cong_diff for r in read_congestion(path)], dtype=float)


def read_packets(path) -> list[PacketRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        _check_header(rd, PACKET_COLUMNS, path)
        return [PacketRecord(int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[5]),
                             int(r[6]), float(r[7]), int(r[8]), r[9] == "1",
                             DropReason(r[10]), float(r[11])) for r in rd]
