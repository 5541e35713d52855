import numpy as np
import pytest
from PIL import Image


def identity_image(pid, cam, rng, height=128, width=64):
    """Synthetic pedestrian-ish image: identity-specific colors with a
    camera-dependent tint and pixel noise."""
    base_rng = np.random.default_rng(1000 + pid)
    top = base_rng.integers(0, 256, 3)
    bottom = base_rng.integers(0, 256, 3)
    rows = np.linspace(0, 1, height)[:, None, None]
    img = top * (1 - rows) + bottom * rows
    img = img + (cam - 1) * 10.0
    img = img + rng.normal(0, 12, (height, width, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def write_image(path, arr):
    Image.fromarray(arr).save(path)


def build_market_dataset(root, train_ids=(1, 2, 3), test_ids=(5, 6, 7, 8),
                         cams=(1, 2), gallery_per_cam=2, seed=7,
                         distractors=2, junk=1):
    """Market-style directory tree of synthetic images; returns root."""
    rng = np.random.default_rng(seed)
    (root / "bounding_box_train").mkdir(parents=True)
    (root / "bounding_box_test").mkdir()
    (root / "query").mkdir()
    frame = 1
    for pid in train_ids:
        for cam in cams:
            for _ in range(2):
                name = f"{pid:04d}_c{cam}s1_{frame:06d}_00.png"
                write_image(root / "bounding_box_train" / name,
                            identity_image(pid, cam, rng))
                frame += 1
    for pid in test_ids:
        for cam in cams:
            for _ in range(gallery_per_cam):
                name = f"{pid:04d}_c{cam}s1_{frame:06d}_00.png"
                write_image(root / "bounding_box_test" / name,
                            identity_image(pid, cam, rng))
                frame += 1
            name = f"{pid:04d}_c{cam}s1_{frame:06d}_00.png"
            write_image(root / "query" / name, identity_image(pid, cam, rng))
            frame += 1
    for _ in range(distractors):
        name = f"0000_c1s1_{frame:06d}_00.png"
        write_image(root / "bounding_box_test" / name,
                    rng.integers(0, 256, (128, 64, 3)).astype(np.uint8))
        frame += 1
    for _ in range(junk):
        name = f"-1_c2s1_{frame:06d}_00.png"
        write_image(root / "bounding_box_test" / name,
                    rng.integers(0, 256, (128, 64, 3)).astype(np.uint8))
        frame += 1
    return root


@pytest.fixture(scope="session")
def market_root(tmp_path_factory):
    return build_market_dataset(tmp_path_factory.mktemp("market"))
