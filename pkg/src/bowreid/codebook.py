"""Visual vocabulary: seeded k-means training and multiple-assignment
quantization, with a binary file format for trained codebooks."""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bowreid.errors import DataError

MAGIC = b"BOWC"
VERSION = 1

_CHUNK = 65536  # points per assignment chunk, keeps the distance matrix small


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # (k, d) float64
    seed: int
    n_iter: int
    objective: float
    objective_history: tuple = field(default=())

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def d(self):
        return self.centroids.shape[1]


@dataclass(frozen=True)
class WordAssignment:
    word_ids: np.ndarray   # (ma,) distinct ints in [0, k)
    distances: np.ndarray  # (ma,) non-decreasing Euclidean distances


def _nearest(points, centroids):
    """Labels and squared distances to the nearest centroid, chunked."""
    n = len(points)
    labels = np.empty(n, dtype=np.int64)
    d2min = np.empty(n)
    c2 = (centroids ** 2).sum(axis=1)
    for start in range(0, n, _CHUNK):
        x = points[start:start + _CHUNK]
        d2 = ((x ** 2).sum(axis=1)[:, None] - 2.0 * x @ centroids.T + c2[None, :])
        labels[start:start + _CHUNK] = d2.argmin(axis=1)
        d2min[start:start + _CHUNK] = np.maximum(d2.min(axis=1), 0.0)
    return labels, d2min


def _kmeans_pp_init(points, k, rng):
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def train_codebook(descriptors, k, seed=0, max_iter=100, tol=1e-4):
    """Lloyd's algorithm with seeded k-means++ init.

    Empty clusters are re-seeded with the point farthest from its centroid;
    stops when mean centroid displacement drops below tol.
    """
    points = np.ascontiguousarray(descriptors, dtype=np.float64)
    if points.ndim != 2:
        raise DataError("descriptors must be a 2-D array")
    if not np.isfinite(points).all():
        raise DataError("non-finite descriptor values")
    n, d = points.shape
    if n < k:
        raise DataError(f"need at least k={k} descriptors, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, d2 = _nearest(points, centroids)
        # re-seed empty clusters from the worst-fit point
        counts = np.bincount(labels, minlength=k)
        for cid in np.flatnonzero(counts == 0):
            far = int(d2.argmax())
            centroids[cid] = points[far]
            labels[far] = cid
            d2[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        history.append(float(d2.sum()))
        new = np.zeros_like(centroids)
        for dim in range(d):
            new[:, dim] = np.bincount(labels, weights=points[:, dim],
                                      minlength=k)
        new /= counts[:, None]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).mean()
        centroids = new
        if shift < tol:
            break
    _, d2 = _nearest(points, centroids)
    objective = float(d2.sum())
    history.append(objective)
    return Codebook(centroids, int(seed), n_iter, objective, tuple(history))


def assign_words(desc, cb, ma):
    """The ma nearest centroids by Euclidean distance, ties by lower word id."""
    if not 1 <= ma <= cb.k:
        raise DataError(f"ma={ma} out of range [1, {cb.k}]")
    diff = cb.centroids - np.asarray(desc, dtype=np.float64)[None, :]
    dist = np.sqrt((diff ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")[:ma]
    return WordAssignment(order, dist[order])


def quantize_grid(grid, cb, ma):
    """Word ids for every patch in a grid; returns (R, C, ma) int array."""
    rows, cols, d = grid.descriptors.shape
    flat = grid.descriptors.reshape(-1, d)
    c2 = (cb.centroids ** 2).sum(axis=1)
    d2 = ((flat ** 2).sum(axis=1)[:, None]
          - 2.0 * flat @ cb.centroids.T + c2[None, :])
    order = np.argsort(d2, axis=1, kind="stable")[:, :ma]
    return order.reshape(rows, cols, ma)


def save_codebook(cb, path):
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<II", cb.k, cb.d))
        fh.write(cb.centroids.astype("<f4").tobytes())
        fh.write(struct.pack("<Qd", cb.seed, cb.objective))


def load_codebook(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not a codebook file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported codebook version {version}")
    k, d = struct.unpack_from("<II", data, 6)
    off = 14
    cents = np.frombuffer(data, dtype="<f4", count=k * d, offset=off)
    off += 4 * k * d
    seed, objective = struct.unpack_from("<Qd", data, off)
    return Codebook(cents.reshape(k, d).astype(np.float64), seed, 0, objective)


def export_codebook_text(cb, path):
    np.savetxt(Path(path), cb.centroids, fmt="%.8f")
