"""Full-scan retrieval: dot-product scoring against an immutable gallery
index, score-level channel fusion, and single-pass query-expansion reranking."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bowreid import kernels
from bowreid.errors import DataError

RANK_MAGIC = b"BOWR"
RANK_VERSION = 1


@dataclass(frozen=True)
class GalleryIndex:
    channels: dict      # name -> (n, dim) float32 C-contiguous matrix
    image_ids: np.ndarray  # (n,) int64, aligned with matrix rows
    metas: tuple        # aligned ImageMeta list (may be empty tuple rows)

    @property
    def size(self):
        return len(self.image_ids)

    def memory_bytes(self):
        return sum(m.nbytes for m in self.channels.values())


@dataclass(frozen=True)
class RankList:
    image_ids: np.ndarray  # gallery ids, best first
    scores: np.ndarray     # non-increasing
    positions: np.ndarray  # gallery row of each entry
    query: object = None   # QuerySpec when known


def build_index(channel_sigs, metas=None):
    """channel_sigs maps channel name to a list of final Signatures; all
    channels must list the same images in the same order."""
    if not channel_sigs:
        raise DataError("index needs at least one channel")
    ids = None
    matrices = {}
    for name, sigs in channel_sigs.items():
        these = np.array([s.image_id for s in sigs], dtype=np.int64)
        if ids is None:
            ids = these
        elif len(these) != len(ids) or (these != ids).any():
            raise DataError(f"channel {name!r} misaligned with the others")
        if sigs:
            dim = sigs[0].vector.shape[0]
            for s in sigs:
                if s.vector.shape[0] != dim:
                    raise DataError(f"channel {name!r}: mixed dimensions")
            mat = np.ascontiguousarray(
                np.stack([s.vector for s in sigs]), dtype=np.float32)
        else:
            mat = np.zeros((0, 0), dtype=np.float32)
        matrices[name] = mat
    metas = tuple(metas) if metas is not None else tuple()
    if metas and len(metas) != len(ids):
        raise DataError(
            f"{len(metas)} metas for {len(ids)} signatures")
    return GalleryIndex(matrices, ids, metas)


def _rank(index, scores, query_spec=None):
    # descending score, ties by ascending image_id
    order = np.lexsort((index.image_ids, -scores))
    return RankList(index.image_ids[order], scores[order], order, query_spec)


def query(index, q, channel="cn", query_spec=None):
    """Exact dot-product scores for every gallery item, fully ranked."""
    mat = index.channels.get(channel)
    if mat is None:
        raise DataError(f"index has no channel {channel!r}")
    vec = q.vector if hasattr(q, "vector") else np.asarray(q)
    if mat.shape[0] and vec.shape[0] != mat.shape[1]:
        raise DataError(
            f"query dimension {vec.shape[0]} != index dimension {mat.shape[1]}")
    scores = np.asarray(kernels.score_gallery(mat, vec), dtype=np.float64)
    return _rank(index, scores, query_spec)


def fuse_channels(scores_a, scores_b, weights=(1.0, 1.0)):
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("fused score lists must align")
    wa, wb = weights
    if wa < 0 or wb < 0 or (wa == 0 and wb == 0):
        raise DataError("fusion weights must be non-negative, not both zero")
    return wa * a + wb * b


def query_fused(index, queries, weights=None, query_spec=None):
    """Score each channel with its own query vector and fuse the scores."""
    names = list(queries)
    if weights is None:
        weights = [1.0] * len(names)
    total = np.zeros(index.size)
    for name, w in zip(names, weights):
        rl = query(index, queries[name], channel=name)
        per_position = np.empty(index.size)
        per_position[rl.positions] = rl.scores
        total += w * per_position
    return _rank(index, total, query_spec)


def rerank(index, initial, t, channel="cn", weights=None):
    """Single-pass query expansion: the top-t initially ranked gallery items
    are reused as queries with weights 1/(i+1) added onto the initial scores.

    channel may be a list of channel names; expanded-query scores are then
    fused with the given weights, matching the initial fused scoring.
    """
    if t < 0 or t > index.size:
        raise DataError(f"t={t} out of range [0, {index.size}]")
    if t == 0:
        return initial
    names = [channel] if isinstance(channel, str) else list(channel)
    if weights is None:
        weights = [1.0] * len(names)
    mats = []
    for name in names:
        mat = index.channels.get(name)
        if mat is None:
            raise DataError(f"index has no channel {name!r}")
        mats.append(mat)
    scores = np.empty(index.size)
    scores[initial.positions] = initial.scores
    for i in range(1, t + 1):
        row = initial.positions[i - 1]
        for mat, w in zip(mats, weights):
            expanded = np.asarray(kernels.score_gallery(mat, mat[row]),
                                  dtype=np.float64)
            scores += w * expanded / (i + 1)
    return _rank(index, scores, initial.query)


def save_ranklist_text(ranklist, path):
    with open(Path(path), "w") as fh:
        for rank, (iid, score) in enumerate(
                zip(ranklist.image_ids, ranklist.scores), start=1):
            fh.write(f"{rank} {iid} {score:.6f}\n")


def save_ranklist_binary(ranklist, path):
    with open(Path(path), "wb") as fh:
        fh.write(RANK_MAGIC)
        fh.write(struct.pack("<H", RANK_VERSION))
        fh.write(struct.pack("<I", len(ranklist.image_ids)))
        for iid, score in zip(ranklist.image_ids, ranklist.scores):
            fh.write(struct.pack("<Qd", int(iid), float(score)))


def load_ranklist_binary(path):
    data = Path(path).read_bytes()
    if data[:4] != RANK_MAGIC:
        raise DataError(f"{path}: not a rank-list file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != RANK_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<I", data, 6)
    ids = np.empty(count, dtype=np.int64)
    scores = np.empty(count)
    off = 10
    for i in range(count):
        iid, score = struct.unpack_from("<Qd", data, off)
        ids[i], scores[i] = iid, score
        off += 16
    return RankList(ids, scores, np.arange(count))
