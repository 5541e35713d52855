"""Image signatures: per-stripe term-frequency histograms with Gaussian
weights, burstiness and IDF weighting, training-mean subtraction, l2
normalization, and multi-query pooling.

Stage order is enforced through the Signature.stage tag:
raw_tf -> weighted (sqrt-tf then IDF) -> final (mean-subtracted, l2-normed).
"""

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from bowreid.errors import DataError, StageError

MAGIC = b"BOWS"
VERSION = 1

IDF_SMOOTHING = 0.5  # floor for document counts of unseen words

STAGES = ("raw_tf", "raw_tf_burst", "weighted", "final")


@dataclass(frozen=True)
class Signature:
    vector: np.ndarray  # (k * M,)
    image_id: int
    k: int
    M: int
    stage: str
    zero_flag: bool = False


@dataclass(frozen=True)
class IdfModel:
    weights: np.ndarray  # (k,)
    N: int
    variant: str  # standard | avg


@dataclass(frozen=True)
class MeanVector:
    values: np.ndarray  # (k * M,)
    count: int


def _check_stage(sig, expected):
    if sig.stage != expected:
        raise StageError(
            f"signature for image {sig.image_id} is at stage "
            f"{sig.stage!r}, expected {expected!r}")


def stripe_of(center_y, height, M):
    if not 0 <= center_y < height:
        raise ValueError(f"center_y {center_y} outside [0, {height})")
    return min(int(center_y) * M // height, M - 1)


def accumulate_tf(word_ids, centers, weights, k, M, height, image_id=-1):
    """Raw term-frequency signature: each patch adds its Gaussian weight to
    (stripe * k + word) for each of its assigned words.

    word_ids is (R, C, ma); centers and weights come from the PatchGrid.
    """
    word_ids = np.asarray(word_ids)
    if word_ids.min(initial=0) < 0 or word_ids.max(initial=0) >= k:
        raise DataError(f"word id outside [0, {k})")
    rows, cols, ma = word_ids.shape
    vec = np.zeros(k * M)
    stripes = np.array([[stripe_of(centers[i, j, 0], height, M)
                         for j in range(cols)] for i in range(rows)])
    idx = (stripes[:, :, None] * k + word_ids).reshape(-1)
    w = np.repeat(np.asarray(weights, dtype=np.float64).reshape(-1), ma)
    np.add.at(vec, idx, w)
    return Signature(vec, image_id, k, M, "raw_tf")


def apply_burstiness(sig):
    """Divide every histogram term by sqrt(tf), i.e. t -> sqrt(t)."""
    _check_stage(sig, "raw_tf")
    if (sig.vector < 0).any():
        raise DataError("raw tf signature has negative entries")
    return replace(sig, vector=np.sqrt(sig.vector), stage="raw_tf_burst")


def compute_idf(gallery_raw_tf, variant="standard"):
    """IDF over gallery images; word presence is pooled across stripes.

    standard: ln(N / n_i) with n_i floored at 0.5 for unseen words.
    avg: ln(N / total_tf_i), reducing to standard when every containing
    image holds exactly one occurrence.
    """
    if not gallery_raw_tf:
        raise DataError("cannot compute IDF from an empty gallery")
    k = gallery_raw_tf[0].k
    N = len(gallery_raw_tf)
    presence = np.zeros(k)
    total_tf = np.zeros(k)
    for sig in gallery_raw_tf:
        if sig.stage != "raw_tf":
            raise StageError("IDF is computed from raw_tf signatures")
        per_word = sig.vector.reshape(sig.M, k).sum(axis=0)
        presence += per_word > 0
        total_tf += per_word
    if variant == "standard":
        n = np.maximum(presence, IDF_SMOOTHING)
    elif variant == "avg":
        n = np.maximum(total_tf, IDF_SMOOTHING)
    else:
        raise DataError(f"unknown IDF variant {variant!r}")
    return IdfModel(np.log(N / n), N, variant)


def apply_idf(sig, idf):
    """Multiply each word's entries (every stripe) by its IDF weight."""
    if sig.stage != "raw_tf_burst":
        raise StageError("apply IDF after burstiness, before finalize")
    if idf.weights.shape != (sig.k,):
        raise DataError(
            f"IDF dimension {idf.weights.shape} != codebook size {sig.k}")
    vec = (sig.vector.reshape(sig.M, sig.k) * idf.weights[None, :]).reshape(-1)
    return replace(sig, vector=vec, stage="weighted")


def compute_training_mean(train_sigs):
    if not train_sigs:
        raise DataError("cannot average an empty training set")
    dim = train_sigs[0].vector.shape
    stage = train_sigs[0].stage
    for sig in train_sigs:
        if sig.vector.shape != dim or sig.stage != stage:
            raise DataError("training signatures differ in dimension or stage")
    mean = np.mean([s.vector for s in train_sigs], axis=0)
    return MeanVector(mean, len(train_sigs))


def finalize(sig, mean=None):
    """Subtract the training mean, then l2-normalize; an exact zero result is
    flagged and left zero."""
    _check_stage(sig, "weighted")
    vec = sig.vector.copy()
    if mean is not None:
        if mean.values.shape != vec.shape:
            raise DataError("mean vector dimension mismatch")
        vec -= mean.values
    norm = np.linalg.norm(vec)
    if norm == 0:
        return replace(sig, vector=vec, stage="final", zero_flag=True)
    return replace(sig, vector=vec / norm, stage="final")


def pool_queries(sigs, mode="avg"):
    """Merge several final query signatures into one (average or max),
    then l2-renormalize."""
    if not sigs:
        raise DataError("cannot pool an empty query set")
    for sig in sigs:
        _check_stage(sig, "final")
    mat = np.stack([s.vector for s in sigs])
    if mode == "avg":
        vec = mat.mean(axis=0)
    elif mode == "max":
        vec = mat.max(axis=0)
    else:
        raise DataError(f"unknown pooling mode {mode!r}")
    norm = np.linalg.norm(vec)
    if norm == 0:
        return replace(sigs[0], vector=vec, stage="final", zero_flag=True)
    return replace(sigs[0], vector=vec / norm, stage="final", zero_flag=False)


def embed_raw(grid, cb, ma, M, height, image_id=-1):
    """Patch grid -> raw_tf signature (quantization + striped accumulation)."""
    from bowreid.codebook import quantize_grid

    words = quantize_grid(grid, cb, ma)
    return accumulate_tf(words, grid.centers, grid.weights, cb.k, M, height,
                         image_id)


def weight_signature(raw, idf):
    return apply_idf(apply_burstiness(raw), idf)


# --- signature store ---------------------------------------------------------

def save_signatures(sigs, path):
    """Binary store: magic, version, count/k/M, then per-record
    (image_id u64, flag u8, k*M little-endian f32)."""
    if not sigs:
        raise DataError("refusing to write an empty signature store")
    k, m = sigs[0].k, sigs[0].M
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<III", len(sigs), k, m))
        for sig in sigs:
            fh.write(struct.pack("<QB", sig.image_id & (2 ** 64 - 1),
                                 1 if sig.zero_flag else 0))
            fh.write(sig.vector.astype("<f4").tobytes())


def load_signatures(path, stage="final"):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not a signature store")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    count, k, m = struct.unpack_from("<III", data, 6)
    off = 18
    sigs = []
    for _ in range(count):
        image_id, flag = struct.unpack_from("<QB", data, off)
        off += 9
        vec = np.frombuffer(data, dtype="<f4", count=k * m, offset=off)
        off += 4 * k * m
        sigs.append(Signature(vec.astype(np.float64), image_id, k, m,
                              stage, bool(flag)))
    return sigs


def save_idf(idf, path):
    """Sidecar in the signature-store framing: one record, N in the id slot."""
    variant_code = {"standard": 0, "avg": 1}[idf.variant]
    sig = Signature(idf.weights, idf.N, len(idf.weights), 1, "raw_tf",
                    bool(variant_code))
    save_signatures([sig], path)


def load_idf(path):
    (sig,) = load_signatures(path, stage="raw_tf")
    variant = "avg" if sig.zero_flag else "standard"
    return IdfModel(sig.vector, sig.image_id, variant)


def save_mean(mean, path):
    sig = Signature(mean.values, mean.count, len(mean.values), 1, "raw_tf")
    save_signatures([sig], path)


def load_mean(path):
    (sig,) = load_signatures(path, stage="raw_tf")
    return MeanVector(sig.vector, sig.image_id)
