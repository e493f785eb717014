"""Command-line pipeline: gen-dataset, train, sweep, cluster, evaluate.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, clusterer, config as configmod, dataset, scheduler
from .channel import default_channel, stationary_distribution
from .errors import (CheckpointError, ConfigError, DataError, DegenerateClustering, EmptyInput,
                     InsufficientData, InvariantViolation, IovcmError, LengthMismatch, NonErgodic,
                     TooFewPoints)
from .forecaster import checkpoint
from .forecaster.network import LSTM, RNN
from .forecaster.training import TrainConfig, predict_normalized, prepare, train, write_metrics
from .simulator import SimConfig, run

log = logging.getLogger("iovcm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4
MANIFEST_FILE = "manifest.json"
MANIFEST_FORMAT = "iovcm-manifest/1"

# reference grid: (group, batch, reference epochs, hidden sizes)
GRID_ROWS = [
    ("batch_size", 32, 1000, (64,)),
    ("batch_size", 64, 1000, (64,)),
    ("batch_size", 128, 1000, (64,)),
    ("epochs", 32, 350, (64,)),
    ("epochs", 32, 750, (64,)),
    ("epochs", 32, 1000, (64,)),
    ("hidden_layers", 64, 1000, (64,)),
    ("hidden_layers", 64, 1000, (64, 32)),
    ("hidden_layers", 64, 1000, (64, 16)),
]
SWEEP_COLUMNS = ["group", "batch", "epochs", "desk_epochs", "layers", "train_acc", "test_acc",
                 "train_rmse", "rmse", "test_rmspe"]


class UsageError(IovcmError):
    pass


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, UsageError)):
        return EXIT_USAGE
    if isinstance(exc, (InvariantViolation, NonErgodic)):
        return EXIT_INVARIANT
    if isinstance(exc, (DataError, InsufficientData, TooFewPoints, DegenerateClustering, EmptyInput,
                        CheckpointError, LengthMismatch, OSError, ValueError)):
        return EXIT_DATA
    return EXIT_INVARIANT


# helpers

def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, command: str, argv, seed, config_path, inputs: dict,
                   artifacts: dict, parameters: dict, started: str) -> Path:
    """One manifest per output directory; paths are stored as given or relative to it."""
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config_path": None if config_path is None else str(config_path),
        "inputs": {k: str(v) for k, v in inputs.items()},
        "artifacts": {k: Path(v).name for k, v in artifacts.items()},
        "parameters": parameters,
        "timestamps": {"started_utc": started, "finished_utc": _now()},
    }
    path = out_dir / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _resolve(path: str, default_name: str) -> Path:
    p = Path(path)
    return p / default_name if p.is_dir() else p


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise DataError(f"{what} not found: {path}")
    return path


def _read_config(path, seed, slots):
    cfg, channel = (configmod.load(path) if path else (SimConfig(), default_channel()))
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if slots is not None:
        changes["n_slots"] = slots
    return cfg.replace(**changes).validate(), channel


def _parse_layers(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--layers expects comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise UsageError("--layers needs at least one positive width")
    return sizes


def _train_config(args) -> TrainConfig:
    return TrainConfig(batch_size=args.batch, n_epochs=args.epochs,
                       hidden_sizes=_parse_layers(args.layers), learning_rate=args.lr,
                       seq_len=args.seq_len, horizon=args.horizon, kind=args.kind,
                       use_time_feature=args.time_feature).validate()


def _load_series(path: Path):
    records = dataset.read_congestion(_require(path, "congestion dataset"))
    values = np.array([r.cong_diff for r in records], dtype=float)
    times = np.array([r.cong_act_time_s for r in records], dtype=float)
    return values, times


# commands

def cmd_gen_dataset(args) -> int:
    started = _now()
    cfg, channel = _read_config(args.config, args.seed, args.slots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.n_slots == 0:
        log.warning("--slots 0: writing empty datasets")
    res = run(cfg, channel)
    cpath, ppath = dataset.export_dataset(res.records, res.trace, out)
    n_pk = len(res.trace)
    delivered = sum(p.delivered for p in res.trace)
    mean_cd = float(np.mean([r.cong_diff for r in res.records])) if res.records else math.nan
    write_manifest(out, "gen-dataset", args.argv, cfg.seed, args.config, {},
                   {"congestion": cpath, "packets": ppath},
                   {"sim_config": configmod.dump(cfg, channel)}, started)
    print(f"slots: {cfg.n_slots}")
    print(f"packets: {n_pk}")
    print(f"congestion records: {len(res.records)}")
    print(f"mean CongDiff: {mean_cd:.3f}")
    print(f"delivery ratio: {(delivered / n_pk if n_pk else 0.0):.4f}")
    return EXIT_OK


def _fit(values, times, cfg, seed):
    rng = np.random.default_rng(seed)
    model, history = train(None, values, cfg, rng, times if cfg.use_time_feature else None)
    return model, history


def cmd_train(args) -> int:
    started = _now()
    cfg = _train_config(args)
    data_path = _resolve(args.data, dataset.CONGESTION_FILE)
    values, times = _load_series(data_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, history = _fit(values, times, cfg, args.seed)
    ckpt = checkpoint.save(model, out / "checkpoint.json")
    mlog = write_metrics(history, out / "metrics.csv")
    preds = _write_test_predictions(model, values, times, out / "test_predictions.csv")
    write_manifest(out, "train", args.argv, args.seed, None, {"dataset": data_path},
                   {"checkpoint": ckpt, "metrics": mlog, "test_predictions": preds},
                   {"train_config": cfg.to_dict()}, started)
    last = history[-1]
    print(f"params: {model.net.n_params()}  layers: {list(cfg.hidden_sizes)}")
    print(f"train RMSE {last.train_rmse:.4f}  RMSPE {last.train_rmspe:.3f}%  "
          f"accuracy {last.train_acc:.2f}%")
    print(f"test  RMSE {last.test_rmse:.4f}  RMSPE {last.test_rmspe:.3f}%  "
          f"accuracy {last.test_acc:.2f}%")
    print(f"auto threshold (70th pct of training CongDiff): {model.threshold_auto:.3f}")
    return EXIT_OK


def _write_test_predictions(model, values, times, path: Path) -> Path:
    """Predicted-vs-actual pairs over the test split, for plotting."""
    data = prepare(values, model.config, times if model.config.use_time_feature else None)
    pred = model.scaler.denormalize(predict_normalized(model.net, data.X_test))
    actual = model.scaler.denormalize(data.y_test)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "actual", "predicted"])
        for i, a, p in zip(data.test_index, actual, pred):
            w.writerow([int(i), f"{a:.6f}", f"{p:.6f}"])
    return path


def cmd_sweep(args) -> int:
    started = _now()
    data_path = _resolve(args.data, dataset.CONGESTION_FILE)
    values, times = _load_series(data_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache: dict = {}
    rows = []
    for group, batch, epochs, hidden in GRID_ROWS:
        desk = max(1, int(round(epochs * args.epoch_scale)))
        key = (batch, desk, hidden)
        if key not in cache:
            cfg = TrainConfig(batch_size=batch, n_epochs=desk, hidden_sizes=hidden,
                              seq_len=args.seq_len, horizon=args.horizon).validate()
            log.info("sweep: batch %d, %d epochs, layers %s", batch, desk, hidden)
            cache[key] = _fit(values, times, cfg, args.seed)[1][-1]
        m = cache[key]
        layers = f"{len(hidden)} layer{'s' if len(hidden) > 1 else ''} ({'-'.join(map(str, hidden))})"
        rows.append([group, batch, epochs, desk, layers, f"{m.train_acc:.2f}", f"{m.test_acc:.2f}",
                     f"{m.train_rmse:.4f}", f"{m.test_rmse:.4f}", f"{m.test_rmspe:.3f}"])
    path = out / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    write_manifest(out, "sweep", args.argv, args.seed, None, {"dataset": data_path},
                   {"sweep": path}, {"epoch_scale": args.epoch_scale, "seq_len": args.seq_len,
                                     "horizon": args.horizon}, started)
    widths = [max(len(str(r[i])) for r in [SWEEP_COLUMNS] + rows) for i in range(len(SWEEP_COLUMNS))]
    for r in [SWEEP_COLUMNS] + rows:
        print("  ".join(str(v).ljust(wd) for v, wd in zip(r, widths)))
    return EXIT_OK


def cmd_cluster(args) -> int:
    started = _now()
    pk_path = _require(_resolve(args.packets, dataset.PACKETS_FILE), "packet trace")
    trace = dataset.read_packets(pk_path)
    points = np.array([[p.ttl_initial, p.priority] for p in trace], dtype=float).reshape(-1, 2)
    if len(points) < max(args.k, 2):
        raise TooFewPoints(f"trace has {len(points)} packets; need at least {max(args.k, 2)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, labels = clusterer.fit(points, args.k, np.random.default_rng(args.seed))
    sil = clusterer.silhouette(model.normalize(points), labels)
    mpath = clusterer.save_model(model, out / "cluster_model.txt")
    rpath = clusterer.write_report(model, [p.packet_id for p in trace], points,
                                   out / "cluster_report.csv")
    spath = out / "silhouette.txt"
    spath.write_text(f"{sil:.6f}\n", encoding="utf-8")
    gt = np.array([p.is_safety for p in trace])
    agree = float(np.mean((labels == model.critical_cluster) == gt))
    write_manifest(out, "cluster", args.argv, args.seed, None, {"packets": pk_path},
                   {"model": mpath, "report": rpath, "silhouette": spath}, {"k": args.k}, started)
    counts = np.bincount(labels, minlength=model.k)
    for j in range(model.k):
        c = model.centroids[j]
        print(f"cluster {j} [{model.label_of(j).value}]: n={counts[j]} "
              f"centroid ttl={c[0]:.3f} priority={c[1]:.3f}")
    print(f"silhouette: {sil:.4f}")
    print(f"agreement with size<=100B ground truth: {agree * 100:.2f}%")
    return EXIT_OK


def _threshold(text: str, model) -> float:
    if text == "auto":
        return float(model.threshold_auto)
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--threshold expects a number or 'auto', got {text!r}") from None
    if not value >= 0:
        raise UsageError("--threshold must be >= 0")
    return value


def cmd_evaluate(args) -> int:
    started = _now()
    cfg, channel = _read_config(args.config, args.seed, args.slots)
    stationary_distribution(channel)  # fail early on a non-ergodic chain
    ck_path = _require(Path(args.checkpoint), "checkpoint")
    cm_path = _require(Path(args.cluster_model), "cluster model")
    model = checkpoint.load(ck_path)
    cmodel = clusterer.load_model(cm_path)
    thr = _threshold(args.threshold, model)
    if args.capacity == "auto":
        cap = scheduler.calibrate_capacity(cfg, channel)
    else:
        try:
            cap = int(args.capacity)
        except ValueError:
            raise UsageError(f"--capacity expects an integer or 'auto', got {args.capacity!r}") from None
    cfg = cfg.replace(slot_capacity_packets=cap).validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for mode in (scheduler.Mode.FIFO, scheduler.Mode.PROACTIVE):
        policy = scheduler.SchedulerPolicy(mode, thr, model.horizon)
        runs[mode], _ = scheduler.run_managed(cfg, channel, model, cmodel, policy)
    cmp = scheduler.compare_policies(runs[scheduler.Mode.FIFO], runs[scheduler.Mode.PROACTIVE])
    fifo_path = scheduler.write_reports(runs[scheduler.Mode.FIFO], out / "slots_fifo.csv")
    prio_path = scheduler.write_reports(runs[scheduler.Mode.PROACTIVE], out / "slots_priority.csv")
    csv_path = out / "comparison.csv"
    csv_path.write_text(cmp.to_csv(), encoding="utf-8")
    txt_path = out / "comparison.txt"
    text = (f"a = Fifo, b = ProactivePriority; threshold {thr:g}; capacity {cap} packets/slot\n"
            + cmp.to_text())
    txt_path.write_text(text, encoding="utf-8")
    write_manifest(out, "evaluate", args.argv, cfg.seed, args.config,
                   {"checkpoint": ck_path, "cluster_model": cm_path},
                   {"slots_fifo": fifo_path, "slots_priority": prio_path,
                    "comparison_csv": csv_path, "comparison_txt": txt_path},
                   {"threshold": thr if math.isfinite(thr) else "inf", "capacity": cap,
                    "sim_config": configmod.dump(cfg, channel)}, started)
    print(text, end="")
    return EXIT_OK


# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iovcm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=False):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None if need_config else 0,
                        help="master seed (all randomness flows from it)")
        if need_config:
            sp.add_argument("--config", help="key = value run configuration")
            sp.add_argument("--slots", type=int, help="override n_slots")

    def train_flags(sp):
        sp.add_argument("--data", required=True, help="congestion.csv or its directory")
        sp.add_argument("--seq-len", type=int, default=32)
        sp.add_argument("--horizon", type=int, default=1)

    g = sub.add_parser("gen-dataset", help="simulate and export congestion.csv and packets.csv")
    common(g, need_config=True)
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a forecaster on a CongDiff series")
    common(t)
    train_flags(t)
    t.add_argument("--layers", default="64", help="comma-separated hidden widths, e.g. 64,16")
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--kind", choices=[LSTM, RNN], default=LSTM)
    t.add_argument("--time-feature", action="store_true", help="add time of day as a feature")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train the nine reference-grid configurations")
    common(s)
    train_flags(s)
    s.add_argument("--epoch-scale", type=float, default=0.2,
                   help="scale factor applied to the reference epoch counts")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("cluster", help="K-means classification of a packet trace")
    common(c)
    c.add_argument("--packets", required=True, help="packets.csv or its directory")
    c.add_argument("--k", type=int, default=2)
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("evaluate", help="compare Fifo and ProactivePriority managed runs")
    common(e, need_config=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--cluster-model", required=True)
    e.add_argument("--threshold", default="auto", help="CongDiff level, 'auto' or 'inf'")
    e.add_argument("--capacity", default="auto", help="packets per slot or 'auto'")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IovcmError, OSError, ValueError) as exc:
        print(f"iovcm {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
