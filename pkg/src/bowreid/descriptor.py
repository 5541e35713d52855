"""Local patch descriptors: Color Names and HS histograms over a dense grid,
plus the center-peaked Gaussian weight used for background suppression."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from bowreid.errors import DataError

CN_DIM = 11
HS_DIM = 20
CN_TABLE_ROWS = 32768

DEFAULT_HEIGHT = 128
DEFAULT_WIDTH = 64

# canonical anchors for the synthetic color-name table, one per name
_CN_ANCHORS = np.array([
    (0, 0, 0),        # black
    (0, 0, 255),      # blue
    (139, 69, 19),    # brown
    (128, 128, 128),  # grey
    (0, 255, 0),      # green
    (255, 165, 0),    # orange
    (255, 192, 203),  # pink
    (128, 0, 128),    # purple
    (255, 0, 0),      # red
    (255, 255, 255),  # white
    (255, 255, 0),    # yellow
], dtype=np.float64)


@dataclass(frozen=True)
class MaskParams:
    mu_x: float = 0.0  # offsets in normalized coordinates, 0 = image center
    mu_y: float = 0.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0

    def __post_init__(self):
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class PatchGrid:
    descriptors: np.ndarray  # (R, C, d)
    centers: np.ndarray      # (R, C, 2) as (y, x)
    weights: np.ndarray      # (R, C), in (0, 1]


def load_cn_table(path):
    """Load a 32768x11 text table of color-name posteriors, one row per
    quantized RGB bin."""
    table = np.loadtxt(Path(path), dtype=np.float64)
    if table.shape != (CN_TABLE_ROWS, CN_DIM):
        raise DataError(
            f"CN table {path}: shape {table.shape}, expected "
            f"({CN_TABLE_ROWS}, {CN_DIM})")
    if (table < 0).any():
        raise DataError(f"CN table {path}: negative probabilities")
    sums = table.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-4:
        raise DataError(f"CN table {path}: rows do not sum to 1")
    return table


def synthetic_cn_table():
    """Deterministic fallback table: each RGB bin gets a one-hot vector for
    the nearest of 11 canonical anchor colors (bin centers compared in RGB)."""
    bins = np.arange(32) * 8 + 4  # bin centers, step 8
    b, g, r = np.meshgrid(bins, bins, bins, indexing="ij")
    centers = np.stack([r, g, b], axis=-1).reshape(-1, 3).astype(np.float64)
    d2 = ((centers[:, None, :] - _CN_ANCHORS[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    table = np.zeros((CN_TABLE_ROWS, CN_DIM))
    table[np.arange(CN_TABLE_ROWS), nearest] = 1.0
    return table


def cn_index(r, g, b):
    return r // 8 + 32 * (g // 8) + 1024 * (b // 8)


def pixel_color_names(rgb, table):
    r, g, b = int(rgb[0]), int(rgb[1]), int(rgb[2])
    return table[cn_index(r, g, b)]


def normalize_image(raw, height=DEFAULT_HEIGHT, width=DEFAULT_WIDTH):
    """Bilinear resize to the working resolution; returns HxWx3 uint8."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected HxWx3 RGB input, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError("zero-area input image")
    if arr.shape[:2] == (height, width):
        return arr.astype(np.uint8)
    img = Image.fromarray(arr.astype(np.uint8))
    img = img.resize((width, height), Image.BILINEAR)
    return np.asarray(img)


def load_image(path, height=DEFAULT_HEIGHT, width=DEFAULT_WIDTH):
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return normalize_image(rgb, height, width)


def sample_patches(img, size=4, step=4):
    """Tile the image with non-overlapping patches.

    Returns (patches, centers): patches is (R, C, size, size, 3) and centers
    is (R, C, 2) with (y, x) pixel coordinates of each patch center.
    """
    if size != step:
        raise ValueError("patches must be non-overlapping (size == step)")
    h, w = img.shape[:2]
    if h % step or w % step:
        raise ValueError(f"image {h}x{w} not divisible by step {step}")
    rows, cols = h // step, w // step
    patches = img.reshape(rows, size, cols, size, -1).transpose(0, 2, 1, 3, 4)
    ys = np.arange(rows) * step + size // 2
    xs = np.arange(cols) * step + size // 2
    centers = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1)
    return patches, centers


def root_normalize(v):
    """l1-normalize then take elementwise square root; zero maps to zero."""
    v = np.asarray(v, dtype=np.float64)
    if (v < 0).any():
        raise ValueError("root_normalize requires a non-negative vector")
    s = v.sum()
    if s == 0:
        return np.zeros_like(v)
    return np.sqrt(v / s)


def patch_cn_descriptor(patch, table):
    """Mean of the per-pixel root-normalized color-name vectors."""
    pix = patch.reshape(-1, 3).astype(np.int64)
    idx = cn_index(pix[:, 0], pix[:, 1], pix[:, 2])
    rows = table[idx]
    sums = rows.sum(axis=1, keepdims=True)
    normed = np.where(sums > 0, np.sqrt(rows / np.where(sums > 0, sums, 1.0)), 0.0)
    return normed.mean(axis=0)


def _rgb_to_hs(pix):
    """Hue in [0, 360), saturation in [0, 1] for an (n, 3) uint8 array."""
    rgb = pix.astype(np.float64) / 255.0
    mx = rgb.max(axis=1)
    mn = rgb.min(axis=1)
    c = mx - mn
    hue = np.zeros(len(rgb))
    nz = c > 0
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    rmax = nz & (mx == r)
    gmax = nz & ~rmax & (mx == g)
    bmax = nz & ~rmax & ~gmax
    hue[rmax] = 60.0 * (((g[rmax] - b[rmax]) / c[rmax]) % 6.0)
    hue[gmax] = 60.0 * ((b[gmax] - r[gmax]) / c[gmax] + 2.0)
    hue[bmax] = 60.0 * ((r[bmax] - g[bmax]) / c[bmax] + 4.0)
    sat = np.where(mx > 0, c / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat


def patch_hs_descriptor(patch, hue_bins=5, sat_bins=4):
    """Joint hue x saturation histogram (5x4 = 20 bins), root-normalized."""
    pix = patch.reshape(-1, 3)
    hue, sat = _rgb_to_hs(pix)
    hb = np.minimum((hue / 360.0 * hue_bins).astype(np.int64), hue_bins - 1)
    sb = np.minimum((sat * sat_bins).astype(np.int64), sat_bins - 1)
    hist = np.bincount(hb * sat_bins + sb, minlength=hue_bins * sat_bins)
    return root_normalize(hist.astype(np.float64))


def gaussian_weight(x, y, height, width, params=MaskParams()):
    """Center-peaked weight; coordinates normalized so half-extent maps to 1."""
    xn = (x - width / 2.0) / (width / 2.0)
    yn = (y - height / 2.0) / (height / 2.0)
    e = ((xn - params.mu_x) ** 2 / (2.0 * params.sigma_x ** 2)
         + (yn - params.mu_y) ** 2 / (2.0 * params.sigma_y ** 2))
    return float(np.exp(-e))


def extract_patch_grid(img, table=None, channel="cn", mask=None,
                       patch_size=4, patch_step=4):
    """Full per-image extraction: descriptors, centers and mask weights.

    channel 'cn' needs a color-name table; 'hs' uses the joint HS histogram.
    mask=None disables background suppression (all weights 1).
    """
    patches, centers = sample_patches(img, patch_size, patch_step)
    rows, cols = patches.shape[:2]
    if channel == "cn":
        if table is None:
            raise ValueError("cn channel requires a color-name table")
        dim = CN_DIM
    elif channel == "hs":
        dim = HS_DIM
    else:
        raise ValueError(f"unknown channel {channel!r}")
    desc = np.empty((rows, cols, dim))
    for i in range(rows):
        for j in range(cols):
            if channel == "cn":
                desc[i, j] = patch_cn_descriptor(patches[i, j], table)
            else:
                desc[i, j] = patch_hs_descriptor(patches[i, j])
    h, w = img.shape[:2]
    if mask is None:
        weights = np.ones((rows, cols))
    else:
        weights = np.empty((rows, cols))
        for i in range(rows):
            for j in range(cols):
                cy, cx = centers[i, j]
                weights[i, j] = gaussian_weight(cx, cy, h, w, mask)
    return PatchGrid(desc, centers, weights)
