"""Dataset manifests: identity/camera/quality labels and query selection.

Two on-disk layouts are supported:

* ``market``: the released directory convention with ``bounding_box_train``,
  ``bounding_box_test`` and ``query`` subdirectories, filenames encoding
  person/camera labels as ``PPPP_cNsS_FFFFFF_BB``.
* ``flat-csv``: a ``manifest.csv`` with header ``path,person,camera,quality,role``
  plus an optional ``split.txt`` id-list file (``train:`` / ``test:`` sections).
"""

import csv
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from bowreid.errors import DataError

log = logging.getLogger(__name__)

DISTRACTOR_PID = 0
JUNK_PID = -1

QUALITIES = ("good", "junk", "distractor")
ROLES = ("train", "gallery", "query")

IMAGE_EXTS = {".jpg", ".jpeg", ".png", ".bmp"}

_NAME_RE = re.compile(r"^(?P<person>-1|\d+)_c(?P<cam>\d+)s\d+_\d+_\d+")


@dataclass(frozen=True)
class ImageMeta:
    image_id: int
    person_id: int
    camera_id: int
    quality: str  # good | junk | distractor
    role: str  # train | gallery | query
    path: str

    def __post_init__(self):
        if self.quality not in QUALITIES:
            raise DataError(f"unknown quality {self.quality!r} for {self.path}")
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r} for {self.path}")
        if self.camera_id < 1:
            raise DataError(f"camera_id must be >= 1, got {self.camera_id}")
        if self.quality == "good" and self.person_id <= 0:
            raise DataError(f"good image needs a real person id: {self.path}")
        if self.quality == "distractor" and self.person_id != DISTRACTOR_PID:
            raise DataError(f"distractor must carry person id 0: {self.path}")


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple
    train_ids: frozenset
    test_ids: frozenset

    def by_role(self, role):
        return [m for m in self.images if m.role == role]

    def by_id(self):
        return {m.image_id: m for m in self.images}


@dataclass(frozen=True)
class QuerySpec:
    person_id: int
    camera_id: int  # probe camera
    probe_image_id: int
    query_image_ids: tuple  # pooling candidates, probe first


def parse_image_name(filename):
    """Parse person/camera/quality labels out of a ``PPPP_cNsS_FFFFFF_BB`` name.

    Person label ``0000`` marks a distractor, ``-1`` marks a junk image.
    """
    stem = Path(filename).name
    m = _NAME_RE.match(stem)
    if m is None:
        raise DataError(f"cannot parse image name {filename!r}: "
                        "expected PPPP_cNsS_FFFFFF_BB")
    person = int(m.group("person"))
    camera = int(m.group("cam"))
    if person == JUNK_PID:
        quality = "junk"
    elif person == DISTRACTOR_PID:
        quality = "distractor"
    else:
        quality = "good"
    return person, camera, quality


def _validate(images, train_ids, test_ids):
    if not images:
        raise DataError("no images found")
    seen = set()
    for m in images:
        if m.image_id in seen:
            raise DataError(f"duplicate image_id {m.image_id}")
        seen.add(m.image_id)
    overlap = train_ids & test_ids
    if overlap:
        raise DataError(f"train/test identity overlap: {sorted(overlap)[:5]}")
    # cross-camera search requires every test identity under >= 2 cameras
    cams = {}
    for m in images:
        if m.role != "train" and m.person_id in test_ids:
            cams.setdefault(m.person_id, set()).add(m.camera_id)
    single = sorted(p for p, c in cams.items() if len(c) < 2)
    if single:
        raise DataError(
            f"test identities present in only one camera: {single[:5]}")
    for m in images:
        if m.quality == "distractor" and m.role in ("train", "query"):
            raise DataError(f"distractor cannot be {m.role}: {m.path}")


def _load_market(root):
    role_dirs = [("train", "bounding_box_train"),
                 ("gallery", "bounding_box_test"),
                 ("query", "query")]
    images = []
    image_id = 0
    for role, sub in role_dirs:
        d = root / sub
        if not d.is_dir():
            continue
        for p in sorted(d.iterdir()):
            if p.suffix.lower() not in IMAGE_EXTS:
                continue
            person, camera, quality = parse_image_name(p.name)
            images.append(ImageMeta(image_id, person, camera, quality,
                                    role, str(p)))
            image_id += 1
    train_ids = frozenset(m.person_id for m in images
                          if m.role == "train" and m.person_id > 0)
    test_ids = frozenset(m.person_id for m in images
                         if m.role != "train" and m.person_id > 0)
    return images, train_ids, test_ids


def _read_split_file(path):
    train_ids, test_ids = set(), set()
    current = None
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "train:":
            current = train_ids
        elif line == "test:":
            current = test_ids
        elif current is None:
            raise DataError(f"split file {path}: id before section header")
        else:
            current.add(int(line))
    return frozenset(train_ids), frozenset(test_ids)


def _load_flat_csv(root):
    csv_path = root / "manifest.csv"
    if not csv_path.is_file():
        raise DataError(f"no manifest.csv under {root}")
    images = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["path", "person", "camera", "quality", "role"]
        if reader.fieldnames != expected:
            raise DataError(
                f"manifest.csv header {reader.fieldnames} != {expected}")
        rows = list(reader)
    rows.sort(key=lambda r: r["path"])
    for image_id, r in enumerate(rows):
        if r["quality"] not in QUALITIES:
            raise DataError(f"unknown quality {r['quality']!r} in {csv_path}")
        if r["role"] not in ROLES:
            raise DataError(f"unknown role {r['role']!r} in {csv_path}")
        images.append(ImageMeta(image_id, int(r["person"]), int(r["camera"]),
                                r["quality"], r["role"], r["path"]))
    split_path = root / "split.txt"
    if split_path.is_file():
        train_ids, test_ids = _read_split_file(split_path)
    else:
        train_ids = frozenset(m.person_id for m in images
                              if m.role == "train" and m.person_id > 0)
        test_ids = frozenset(m.person_id for m in images
                             if m.role != "train" and m.person_id > 0)
    return images, train_ids, test_ids


def load_manifest(root, layout="market"):
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    if layout == "market":
        images, train_ids, test_ids = _load_market(root)
    elif layout == "flat-csv":
        images, train_ids, test_ids = _load_flat_csv(root)
    else:
        raise DataError(f"unknown layout {layout!r}")
    _validate(images, train_ids, test_ids)
    return DatasetManifest(tuple(images), train_ids, test_ids)


def save_manifest(manifest, root):
    """Write the flat-csv layout (manifest.csv + split.txt) under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = sorted(manifest.images, key=lambda m: m.path)
    with open(root / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "person", "camera", "quality", "role"])
        for m in rows:
            w.writerow([m.path, m.person_id, m.camera_id, m.quality, m.role])
    with open(root / "split.txt", "w") as fh:
        fh.write("train:\n")
        for pid in sorted(manifest.train_ids):
            fh.write(f"{pid}\n")
        fh.write("test:\n")
        for pid in sorted(manifest.test_ids):
            fh.write(f"{pid}\n")


def select_queries(manifest, multi_query=False):
    """One QuerySpec per (test identity, probe camera) with query-role images.

    With multi_query on, each spec lists pooling candidates: all same-camera
    query images when the probe camera has more than one, otherwise all of
    the identity's query images across cameras.
    """
    queries = {}
    cameras_seen = {}
    for m in manifest.images:
        if m.person_id <= 0 or m.role == "train":
            continue
        cameras_seen.setdefault(m.person_id, set()).add(m.camera_id)
        if m.role == "query":
            queries.setdefault(m.person_id, {}).setdefault(
                m.camera_id, []).append(m)

    specs = []
    skipped = 0
    for pid in sorted(manifest.test_ids):
        by_cam = queries.get(pid)
        if not by_cam:
            skipped += 1
            continue
        if len(cameras_seen.get(pid, ())) < 2:
            continue  # no cross-camera match possible
        all_query_ids = [m.image_id
                         for cam in sorted(by_cam)
                         for m in sorted(by_cam[cam], key=lambda x: x.path)]
        for cam in sorted(by_cam):
            cam_imgs = sorted(by_cam[cam], key=lambda m: m.path)
            probe = cam_imgs[0]
            if not multi_query:
                pool = (probe.image_id,)
            elif len(cam_imgs) > 1:
                pool = tuple(m.image_id for m in cam_imgs)
            else:
                pool = (probe.image_id,) + tuple(
                    i for i in all_query_ids if i != probe.image_id)
            specs.append(QuerySpec(pid, cam, probe.image_id, pool))
    if skipped:
        log.warning("skipped %d identities with no query images", skipped)
    return specs
