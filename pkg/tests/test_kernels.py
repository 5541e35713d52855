import numpy as np
import pytest

from bowreid import kernels


def test_backends_agree():
    rng = np.random.default_rng(0)
    gallery = rng.standard_normal((300, 64)).astype(np.float32)
    q = rng.standard_normal(64).astype(np.float32)
    a = kernels.score_gallery(gallery, q)
    b = kernels.score_gallery_numpy(gallery, q)
    assert np.allclose(a, b, atol=1e-5)


def test_backends_agree_with_float64_reference():
    rng = np.random.default_rng(1)
    gallery = rng.standard_normal((50, 32)).astype(np.float32)
    q = rng.standard_normal(32).astype(np.float32)
    ref = gallery.astype(np.float64) @ q.astype(np.float64)
    assert np.allclose(kernels.score_gallery(gallery, q), ref, atol=1e-5)
    assert np.allclose(kernels.score_gallery_numpy(gallery, q), ref, atol=1e-4)


def test_dimension_mismatch():
    gallery = np.zeros((4, 8), dtype=np.float32)
    with pytest.raises(ValueError):
        kernels.score_gallery(gallery, np.zeros(5, dtype=np.float32))
    with pytest.raises(ValueError):
        kernels.score_gallery_numpy(gallery, np.zeros(5, dtype=np.float32))


def test_accepts_non_contiguous_float64_input():
    rng = np.random.default_rng(2)
    gallery = rng.standard_normal((10, 6))[:, ::1]
    q = rng.standard_normal(6)
    out = kernels.score_gallery(gallery[::2], q)
    assert out.shape == (5,)
