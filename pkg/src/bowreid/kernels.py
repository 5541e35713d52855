"""Gallery-scan kernel selection: compiled extension when available, numpy otherwise.

Set BOWREID_PURE=1 to force the numpy path (used by the benchmark to compare
both backends).
"""

import os

import numpy as np

_compiled_score = None
if not os.environ.get("BOWREID_PURE"):
    try:
        from bowreid._scan import score_gallery as _compiled_score
    except ImportError:
        _compiled_score = None

BACKEND = "cython" if _compiled_score is not None else "numpy"


def _as_f32_matrix(gallery):
    g = np.ascontiguousarray(gallery, dtype=np.float32)
    if g.ndim != 2:
        raise ValueError("gallery must be 2-D")
    return g


def score_gallery_numpy(gallery, q):
    g = _as_f32_matrix(gallery)
    qv = np.ascontiguousarray(q, dtype=np.float32)
    if qv.shape != (g.shape[1],):
        raise ValueError(
            "query dimension %d != gallery dimension %d" % (qv.size, g.shape[1])
        )
    return g @ qv


def score_gallery(gallery, q):
    """Score of every gallery row against q (plain dot product)."""
    if _compiled_score is None:
        return score_gallery_numpy(gallery, q)
    g = _as_f32_matrix(gallery)
    qv = np.ascontiguousarray(q, dtype=np.float32)
    return _compiled_score(g, qv)
