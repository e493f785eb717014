"""K-means++ clustering of packet headers on (TTL, priority).

Features are min-max scaled per column before any distance is taken; a column
with zero range gets scale 1 so it contributes nothing to distances between
training points.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateClustering, InvariantViolation, TooFewPoints
from .packet import PacketHeader
from .queueing import PacketClass

log = logging.getLogger(__name__)

FEATURES = ("ttl", "priority")
REPORT_COLUMNS = ["packet_id", "ttl", "priority", "label", "distance_to_centroid"]
MODEL_TAG = "iovcm-cluster-model 1"


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray    # (k, 2) in raw feature units
    feature_min: np.ndarray  # (2,)
    feature_max: np.ndarray  # (2,)
    n_iter: int = 0
    wcss: float = float("nan")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def feature_scale(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.feature_min, self.feature_max)]

    @property
    def span(self) -> np.ndarray:
        s = self.feature_max - self.feature_min
        return np.where(s > 0, s, 1.0)

    def normalize(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.feature_min) / self.span

    @property
    def centroids_normalized(self) -> np.ndarray:
        return self.normalize(self.centroids)

    @property
    def critical_cluster(self) -> int:
        # lowest priority centroid, ties broken by lower TTL
        return int(np.lexsort((self.centroids[:, 0], self.centroids[:, 1]))[0])

    def label_of(self, cluster: int) -> PacketClass:
        return PacketClass.CRITICAL if cluster == self.critical_cluster else PacketClass.NON_CRITICAL


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(points, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``k`` initial centroids from ``points`` by D^2 sampling.

    When every remaining point coincides with a chosen centroid the weights are
    all zero and the next pick is uniform.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k < 1 or n < k:
        raise TooFewPoints(f"need at least k={k} points, got {n}")
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def fit(points, k: int = 2, rng: np.random.Generator | None = None, max_iter: int = 100,
        tol: float = 1e-6, n_init: int = 10) -> tuple[ClusterModel, np.ndarray]:
    """Lloyd's algorithm from ``n_init`` K-means++ starts; keeps the lowest WCSS.

    Returns (model, labels). Restarts matter on unbalanced data, where a single
    start can settle in a local optimum with the boundary one priority level off.
    """
    raw = np.asarray(points, dtype=float)
    if raw.ndim != 2 or len(raw) < max(k, 1):
        raise TooFewPoints(f"need at least k={k} points, got {len(raw)}")
    if n_init < 1:
        raise ValueError("n_init must be at least 1")
    rng = rng if rng is not None else np.random.default_rng()
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    X = (raw - lo) / span
    best = None
    for _ in range(n_init):
        C, labels, n_iter, total = lloyd(X, kmeans_pp_init(X, k, rng), max_iter, tol)
        if best is None or total < best[3]:
            best = (C, labels, n_iter, total)
    C, labels, n_iter, total = best
    return ClusterModel(C * span + lo, lo, hi, n_iter, total), labels


def lloyd(X, C, max_iter: int = 100, tol: float = 1e-6):
    """Lloyd iterations on normalized points; returns (centroids, labels, iterations, WCSS)."""
    k = len(C)
    prev_wcss = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(X, C)
        labels = d2.argmin(axis=1)
        wcss = float(d2[np.arange(len(X)), labels].sum())
        if wcss > prev_wcss * (1 + 1e-12) + 1e-12:
            raise InvariantViolation(f"WCSS rose from {prev_wcss} to {wcss} at iteration {n_iter}")
        prev_wcss = wcss
        new_C = C.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new_C[j] = X[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            far = int(d2[np.arange(len(X)), labels].argmax())
            log.debug("reseeding empty cluster %d from point %d", j, far)
            new_C[j] = X[far]
            labels[far] = j
            d2[far] = 0.0
        moved = float(np.max(np.linalg.norm(new_C - C, axis=1)))
        C = new_C
        if moved < tol:
            break
    d2 = _sq_dists(X, C)
    labels = d2.argmin(axis=1)
    wcss = float(d2[np.arange(len(X)), labels].sum())
    if wcss > prev_wcss * (1 + 1e-12) + 1e-12:
        raise InvariantViolation(f"WCSS rose from {prev_wcss} to {wcss} after the final update")
    return C, labels, n_iter, wcss


def wcss(points, labels, centroids) -> float:
    points = np.asarray(points, dtype=float)
    return float(((points - np.asarray(centroids)[labels]) ** 2).sum())


def silhouette(points, labels) -> float:
    """Mean silhouette over all points; points in singleton clusters score 0.

    Identical (point, label) rows are collapsed with multiplicities first, so
    large traces with few distinct headers stay cheap.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if len(points) != len(labels) or len(points) == 0:
        raise DegenerateClustering("points and labels must be nonempty and equally long")
    _, lab = np.unique(labels, return_inverse=True)
    k = int(lab.max()) + 1
    if k < 2:
        raise DegenerateClustering("silhouette needs at least two nonempty clusters")
    rows, counts = np.unique(np.column_stack([points, lab]), axis=0, return_counts=True)
    U, ul = rows[:, :-1], rows[:, -1].astype(int)
    W = np.zeros((len(U), k))
    W[np.arange(len(U)), ul] = counts
    sizes = W.sum(axis=0)
    score_sum = 0.0
    step = max(1, 4_000_000 // max(len(U), 1))
    for s in range(0, len(U), step):
        D = np.sqrt(_sq_dists(U[s:s + step], U))
        per_cluster = D @ W  # summed distance to every cluster
        own = ul[s:s + step]
        n_own = sizes[own]
        idx = np.arange(len(own))
        a = np.divide(per_cluster[idx, own], n_own - 1, out=np.zeros(len(own)), where=n_own > 1)
        mean_other = per_cluster / sizes
        mean_other[idx, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        sil = np.divide(b - a, denom, out=np.zeros(len(own)), where=denom > 0)
        sil[n_own <= 1] = 0.0
        score_sum += float((sil * counts[s:s + step]).sum())
    return score_sum / len(points)


def assign(model: ClusterModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid cluster index and normalized distance for raw feature rows."""
    d2 = _sq_dists(model.normalize(np.atleast_2d(points)), model.centroids_normalized)
    idx = d2.argmin(axis=1)
    return idx, np.sqrt(d2[np.arange(len(idx)), idx])


def classify(model: ClusterModel, header: PacketHeader) -> PacketClass:
    return classify_features(model, header.ttl, header.priority)


def classify_features(model: ClusterModel, ttl: float, priority: float) -> PacketClass:
    idx, _ = assign(model, [[ttl, priority]])
    return model.label_of(int(idx[0]))


def critical_mask(model: ClusterModel, points) -> np.ndarray:
    idx, _ = assign(model, points)
    return idx == model.critical_cluster


# files

def save_model(model: ClusterModel, path) -> Path:
    g = "{:.9g}".format
    lines = [MODEL_TAG, f"k {model.k}"]
    for name, a, b in zip(FEATURES, model.feature_min, model.feature_max):
        lines.append(f"scale {name} {g(a)} {g(b)}")
    for j, c in enumerate(model.centroids):
        lines.append(f"centroid {j} " + " ".join(g(v) for v in c))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_model(path) -> ClusterModel:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read cluster model {path}: {exc.strerror}") from None
    if not lines or lines[0].strip() != MODEL_TAG:
        raise DataError(f"{path}: not a cluster model file")
    try:
        fields = [ln.split() for ln in lines[1:] if ln.strip()]
        k = int(next(f[1] for f in fields if f[0] == "k"))
        scale = {f[1]: (float(f[2]), float(f[3])) for f in fields if f[0] == "scale"}
        cents = sorted((int(f[1]), [float(v) for v in f[2:]]) for f in fields if f[0] == "centroid")
        C = np.array([c for _, c in cents], dtype=float)
        lo = np.array([scale[name][0] for name in FEATURES])
        hi = np.array([scale[name][1] for name in FEATURES])
    except (StopIteration, KeyError, IndexError, ValueError) as exc:
        raise DataError(f"{path}: malformed cluster model ({exc})") from None
    if C.shape != (k, len(FEATURES)):
        raise DataError(f"{path}: expected {k} centroids of dimension {len(FEATURES)}")
    return ClusterModel(C, lo, hi)


def write_report(model: ClusterModel, packet_ids, points, path) -> Path:
    points = np.asarray(points, dtype=float)
    idx, dist = assign(model, points)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for pid, (ttl, prio), j, d in zip(packet_ids, points, idx, dist):
            w.writerow([pid, int(ttl), int(prio), model.label_of(int(j)).value, f"{d:.6f}"])
    return path
