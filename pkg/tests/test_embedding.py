import numpy as np
import pytest

from bowreid import embedding
from bowreid.codebook import Codebook
from bowreid.descriptor import (MaskParams, extract_patch_grid,
                                gaussian_weight, synthetic_cn_table)
from bowreid.embedding import (IdfModel, MeanVector, Signature,
                               accumulate_tf, apply_burstiness, apply_idf,
                               compute_idf, compute_training_mean, embed_raw,
                               finalize, load_idf, load_mean,
                               load_signatures, pool_queries, save_idf,
                               save_mean, save_signatures, stripe_of,
                               weight_signature)
from bowreid.errors import DataError, StageError


def sig(vec, stage="raw_tf", k=None, M=1, image_id=0):
    vec = np.asarray(vec, dtype=np.float64)
    if k is None:
        k = len(vec) // M
    return Signature(vec, image_id, k, M, stage)


def test_stripe_of_edges():
    assert stripe_of(0, 128, 16) == 0
    assert stripe_of(127, 128, 16) == 15
    assert stripe_of(10, 128, 16) == 1


def test_stripe_of_stays_in_range():
    for h, m in ((10, 16), (128, 16), (7, 3)):
        for y in range(h):
            assert 0 <= stripe_of(y, h, m) < m


def test_accumulate_single_patch():
    words = np.array([[[5]]])
    centers = np.zeros((1, 1, 2), dtype=int)
    weights = np.ones((1, 1))
    out = accumulate_tf(words, centers, weights, k=8, M=1, height=4)
    expect = np.zeros(8)
    expect[5] = 1.0
    assert np.array_equal(out.vector, expect)
    assert out.stage == "raw_tf"


def test_accumulate_two_stripes():
    words = np.array([[[3]], [[3]]])
    centers = np.array([[[1, 0]], [[6, 0]]])
    weights = np.ones((2, 1))
    out = accumulate_tf(words, centers, weights, k=4, M=2, height=8)
    assert out.vector[3] == 1.0
    assert out.vector[4 + 3] == 1.0
    assert out.vector.sum() == 2.0


def test_accumulate_total_mass_oracle():
    rng = np.random.default_rng(0)
    rows, cols, ma, k, M, height = 32, 16, 10, 20, 16, 128
    words = rng.integers(0, k, (rows, cols, ma))
    centers = np.stack(np.meshgrid(np.arange(rows) * 4 + 2,
                                   np.arange(cols) * 4 + 2,
                                   indexing="ij"), axis=-1)
    weights = np.array([[gaussian_weight(c[1], c[0], height, 64)
                         for c in row] for row in centers])
    out = accumulate_tf(words, centers, weights, k, M, height)
    # brute-force double loop
    expect = np.zeros(k * M)
    for i in range(rows):
        for j in range(cols):
            s = stripe_of(centers[i, j, 0], height, M)
            for w in words[i, j]:
                expect[s * k + w] += weights[i, j]
    assert np.allclose(out.vector, expect)
    assert out.vector.sum() == pytest.approx(10 * weights.sum())


def test_accumulate_rejects_bad_word():
    words = np.array([[[9]]])
    with pytest.raises(DataError):
        accumulate_tf(words, np.zeros((1, 1, 2), dtype=int),
                      np.ones((1, 1)), k=4, M=1, height=4)


def test_burstiness_values():
    out = apply_burstiness(sig([9.0, 1.0, 0.0, 2.5]))
    assert np.allclose(out.vector, [3.0, 1.0, 0.0, np.sqrt(2.5)])


def test_burstiness_wrong_stage():
    with pytest.raises(StageError):
        apply_burstiness(sig([1.0], stage="final"))


def test_idf_formula():
    gallery = [sig([1.0, 1.0, 0.0]), sig([1.0, 0.0, 0.0]),
               sig([1.0, 0.0, 0.0]), sig([1.0, 1.0, 0.0])]
    idf = compute_idf(gallery)
    assert idf.weights[1] == pytest.approx(np.log(2.0))   # in 2 of 4
    assert idf.weights[0] == pytest.approx(0.0)           # in all 4
    assert idf.weights[2] == pytest.approx(np.log(4 / 0.5))  # unseen, floored


def test_idf_counts_presence_across_stripes():
    gallery = [sig([0.0, 1.0, 1.0, 0.0], M=2),  # word 1 twice via stripes
               sig([0.0, 0.0, 0.0, 0.0], M=2)]
    idf = compute_idf(gallery)
    assert idf.weights[1] == pytest.approx(np.log(2.0 / 1.0))


def test_idf_avg_variant_reduces_to_standard_on_binary_tf():
    gallery = [sig([1.0, 1.0]), sig([1.0, 0.0])]
    std = compute_idf(gallery, "standard")
    avg = compute_idf(gallery, "avg")
    assert np.allclose(std.weights, avg.weights)
    heavy = [sig([4.0, 1.0]), sig([1.0, 0.0])]
    avg2 = compute_idf(heavy, "avg")
    assert avg2.weights[0] == pytest.approx(np.log(2.0 / 5.0))


def test_idf_empty_gallery():
    with pytest.raises(DataError):
        compute_idf([])


def test_apply_idf_identity_and_scaling():
    s = apply_burstiness(sig([4.0, 1.0, 0.0, 9.0], M=2, k=2))
    ones = IdfModel(np.ones(2), 4, "standard")
    assert np.allclose(apply_idf(s, ones).vector, s.vector)
    idf = IdfModel(np.array([2.0, 3.0]), 4, "standard")
    out = apply_idf(s, idf)
    assert np.allclose(out.vector, s.vector * np.array([2.0, 3.0, 2.0, 3.0]))
    assert out.stage == "weighted"


def test_apply_idf_dense_oracle():
    rng = np.random.default_rng(1)
    k, M = 7, 3
    s = apply_burstiness(sig(rng.random(k * M), k=k, M=M))
    idf = IdfModel(rng.random(k), 10, "standard")
    out = apply_idf(s, idf)
    for m in range(M):
        for i in range(k):
            assert out.vector[m * k + i] == pytest.approx(
                s.vector[m * k + i] * idf.weights[i])


def test_apply_idf_requires_burstiness_first():
    with pytest.raises(StageError):
        apply_idf(sig([1.0, 2.0]), IdfModel(np.ones(2), 1, "standard"))


def test_apply_idf_dimension_mismatch():
    s = apply_burstiness(sig([1.0, 2.0]))
    with pytest.raises(DataError):
        apply_idf(s, IdfModel(np.ones(3), 1, "standard"))


def test_training_mean():
    a = sig([1.0, 2.0], stage="weighted")
    b = sig([-1.0, -2.0], stage="weighted")
    assert np.allclose(compute_training_mean([a]).values, a.vector)
    assert np.allclose(compute_training_mean([a, b]).values, 0.0)
    rng = np.random.default_rng(2)
    vs = [sig(rng.standard_normal(4), stage="weighted") for _ in range(3)]
    expect = sum(v.vector for v in vs) / 3
    assert np.allclose(compute_training_mean(vs).values, expect)


def test_training_mean_empty():
    with pytest.raises(DataError):
        compute_training_mean([])


def test_finalize_zero_flag():
    s = sig([1.0, 2.0], stage="weighted")
    mean = MeanVector(np.array([1.0, 2.0]), 1)
    out = finalize(s, mean)
    assert out.zero_flag
    assert np.array_equal(out.vector, np.zeros(2))


def test_finalize_three_four_five():
    s = sig([3.0, 4.0, 0.0], stage="weighted")
    out = finalize(s, MeanVector(np.zeros(3), 1))
    assert np.allclose(out.vector, [0.6, 0.8, 0.0])


def test_finalize_direction_oracle():
    rng = np.random.default_rng(3)
    v = rng.standard_normal(6)
    m = rng.standard_normal(6)
    out = finalize(sig(v, stage="weighted"), MeanVector(m, 2))
    diff = v - m
    assert np.allclose(out.vector, diff / np.linalg.norm(diff))
    assert np.isclose(np.linalg.norm(out.vector), 1.0)


def test_finalize_stage_enforced():
    with pytest.raises(StageError):
        finalize(sig([1.0, 0.0]), MeanVector(np.zeros(2), 1))


def _final(vec):
    v = np.asarray(vec, dtype=np.float64)
    return Signature(v / np.linalg.norm(v), 0, len(v), 1, "final")


def test_pool_single_identity():
    s = _final([0.6, 0.8])
    for mode in ("avg", "max"):
        assert np.allclose(pool_queries([s], mode).vector, s.vector)


def test_pool_avg_identical():
    s = _final([0.6, 0.8])
    assert np.allclose(pool_queries([s, s], "avg").vector, s.vector)


def test_pool_max_elementwise():
    a = Signature(np.array([0.1, 0.3]), 0, 2, 1, "final")
    b = Signature(np.array([0.2, 0.0]), 1, 2, 1, "final")
    out = pool_queries([a, b], "max")
    expect = np.array([0.2, 0.3])
    assert np.allclose(out.vector, expect / np.linalg.norm(expect))
    # dominance before renormalization
    assert (np.maximum(a.vector, b.vector) >= a.vector).all()
    assert (np.maximum(a.vector, b.vector) >= b.vector).all()


def test_pool_empty():
    with pytest.raises(DataError):
        pool_queries([], "avg")


def test_stage_order_is_enforced_end_to_end():
    raw = sig([4.0, 1.0])
    with pytest.raises(StageError):
        finalize(raw, MeanVector(np.zeros(2), 1))
    burst = apply_burstiness(raw)
    with pytest.raises(StageError):
        apply_burstiness(burst)
    weighted = apply_idf(burst, IdfModel(np.ones(2), 1, "standard"))
    with pytest.raises(StageError):
        apply_idf(weighted, IdfModel(np.ones(2), 1, "standard"))
    final = finalize(weighted, MeanVector(np.zeros(2), 1))
    with pytest.raises(StageError):
        finalize(final, MeanVector(np.zeros(2), 1))


def test_plain_histogram_special_case():
    """mask off, MA=1, M=1, IDF=1, mean=0: the signature is the normalized
    square-root word-count histogram."""
    rng = np.random.default_rng(4)
    table = synthetic_cn_table()
    img = rng.integers(0, 256, (16, 8, 3)).astype(np.uint8)
    grid = extract_patch_grid(img, table=table, mask=None)
    k = 6
    cents = rng.random((k, 11))
    cb = Codebook(cents, 0, 0, 0.0)
    raw = embed_raw(grid, cb, ma=1, M=1, height=16)
    idf = IdfModel(np.ones(k), 1, "standard")
    final = finalize(weight_signature(raw, idf), MeanVector(np.zeros(k), 1))
    # independent word-count oracle
    counts = np.zeros(k)
    for i in range(grid.descriptors.shape[0]):
        for j in range(grid.descriptors.shape[1]):
            d = grid.descriptors[i, j]
            dists = [np.sqrt(((d - c) ** 2).sum()) for c in cents]
            counts[int(np.argmin(dists))] += 1
    expect = np.sqrt(counts)
    expect /= np.linalg.norm(expect)
    assert np.allclose(final.vector, expect)


def test_stripe_concatenation_dot_product_distributes():
    rng = np.random.default_rng(5)
    k, M = 5, 4
    a = rng.standard_normal(k * M)
    b = rng.standard_normal(k * M)
    per_stripe = sum(np.dot(a[m * k:(m + 1) * k], b[m * k:(m + 1) * k])
                     for m in range(M))
    assert np.dot(a, b) == pytest.approx(per_stripe)


def test_signature_store_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    sigs = []
    for i in range(5):
        v = rng.standard_normal(12)
        v /= np.linalg.norm(v)
        sigs.append(Signature(v, i, 4, 3, "final"))
    path = tmp_path / "sigs.bin"
    save_signatures(sigs, path)
    back = load_signatures(path)
    assert len(back) == 5
    for orig, got in zip(sigs, back):
        assert got.image_id == orig.image_id
        assert got.k == 4 and got.M == 3
        assert np.allclose(got.vector, orig.vector, atol=1e-6)


def test_idf_and_mean_sidecars(tmp_path):
    idf = IdfModel(np.array([0.5, 1.5, 0.0]), 7, "avg")
    save_idf(idf, tmp_path / "idf.bin")
    back = load_idf(tmp_path / "idf.bin")
    assert back.N == 7 and back.variant == "avg"
    assert np.allclose(back.weights, idf.weights, atol=1e-7)
    mean = MeanVector(np.array([0.25, -0.5, 1.0]), 12)
    save_mean(mean, tmp_path / "mean.bin")
    back = load_mean(tmp_path / "mean.bin")
    assert back.count == 12
    assert np.allclose(back.values, mean.values, atol=1e-7)
