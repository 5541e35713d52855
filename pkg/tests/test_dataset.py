import pytest

from bowreid import dataset
from bowreid.dataset import (DatasetManifest, ImageMeta, parse_image_name,
                             load_manifest, save_manifest, select_queries)
from bowreid.errors import DataError


def test_parse_good_name():
    person, camera, quality = parse_image_name("0002_c1s1_000451_03.jpg")
    assert (person, camera, quality) == (2, 1, "good")


def test_parse_distractor_sentinel():
    person, camera, quality = parse_image_name("0000_c3s2_000100_01.jpg")
    assert (person, camera, quality) == (0, 3, "distractor")


def test_parse_junk_sentinel():
    person, camera, quality = parse_image_name("-1_c2s1_000050_02.jpg")
    assert (person, camera, quality) == (-1, 2, "junk")


def test_parse_malformed_name():
    with pytest.raises(DataError, match="cannot parse"):
        parse_image_name("portrait.jpg")


def test_load_market(market_root):
    manifest = load_manifest(market_root, "market")
    assert len(manifest.images) > 0
    assert manifest.train_ids == frozenset({1, 2, 3})
    assert manifest.test_ids == frozenset({5, 6, 7, 8})
    roles = {m.role for m in manifest.images}
    assert roles == {"train", "gallery", "query"}
    # deterministic ordering by path within each role directory
    paths = [m.path for m in manifest.images if m.role == "train"]
    assert paths == sorted(paths)


def test_load_empty_directory(tmp_path):
    (tmp_path / "bounding_box_train").mkdir()
    with pytest.raises(DataError, match="no images found"):
        load_manifest(tmp_path, "market")


def test_csv_roundtrip(market_root, tmp_path):
    manifest = load_manifest(market_root, "market")
    save_manifest(manifest, tmp_path)
    reloaded = load_manifest(tmp_path, "flat-csv")
    key = lambda m: m.path
    orig = sorted(manifest.images, key=key)
    back = sorted(reloaded.images, key=key)
    assert [(m.path, m.person_id, m.camera_id, m.quality, m.role)
            for m in orig] == \
           [(m.path, m.person_id, m.camera_id, m.quality, m.role)
            for m in back]
    assert reloaded.train_ids == manifest.train_ids
    assert reloaded.test_ids == manifest.test_ids


def test_csv_unknown_quality(tmp_path):
    (tmp_path / "manifest.csv").write_text(
        "path,person,camera,quality,role\n"
        "a.png,1,1,weird,gallery\n")
    with pytest.raises(DataError, match="unknown quality"):
        load_manifest(tmp_path, "flat-csv")


def test_single_camera_test_identity_rejected(tmp_path):
    (tmp_path / "manifest.csv").write_text(
        "path,person,camera,quality,role\n"
        "a.png,5,1,good,gallery\n"
        "b.png,5,1,good,query\n"
        "c.png,6,1,good,gallery\n"
        "d.png,6,2,good,query\n")
    with pytest.raises(DataError, match="only one camera"):
        load_manifest(tmp_path, "flat-csv")


def _toy_manifest(n_cams=3):
    """One test identity under n_cams cameras, one query + one gallery per
    camera, plus a second identity to keep things honest."""
    images = []
    iid = 0
    for pid in (5, 6):
        for cam in range(1, n_cams + 1):
            images.append(ImageMeta(iid, pid, cam, "good", "gallery",
                                    f"g{iid}.png"))
            iid += 1
            images.append(ImageMeta(iid, pid, cam, "good", "query",
                                    f"q{iid}.png"))
            iid += 1
    return DatasetManifest(tuple(images), frozenset(), frozenset({5, 6}))


def test_select_queries_one_per_identity_camera():
    specs = select_queries(_toy_manifest(n_cams=3))
    assert len(specs) == 6  # 2 identities x 3 cameras
    for spec in specs:
        assert spec.query_image_ids == (spec.probe_image_id,)


def test_select_queries_single_camera_identity_excluded():
    images = [
        ImageMeta(0, 5, 1, "good", "gallery", "a.png"),
        ImageMeta(1, 5, 1, "good", "query", "b.png"),
    ]
    manifest = DatasetManifest(tuple(images), frozenset(), frozenset({5}))
    assert select_queries(manifest) == []


def test_select_queries_multi_query_pools_across_cameras():
    # one query per camera: pooling falls back to all cameras' queries
    specs = select_queries(_toy_manifest(n_cams=4), multi_query=True)
    by_pid = {}
    for spec in specs:
        by_pid.setdefault(spec.person_id, []).append(spec)
    for pid, pid_specs in by_pid.items():
        assert len(pid_specs) == 4
        for spec in pid_specs:
            assert len(spec.query_image_ids) == 4
            assert spec.query_image_ids[0] == spec.probe_image_id


def test_select_queries_multi_query_same_camera_pool():
    images = []
    iid = 0
    for cam in (1, 2):
        for _ in range(3):  # three query images in each camera
            images.append(ImageMeta(iid, 5, cam, "good", "query",
                                    f"q{iid}.png"))
            iid += 1
        images.append(ImageMeta(iid, 5, cam, "good", "gallery", f"g{iid}.png"))
        iid += 1
    manifest = DatasetManifest(tuple(images), frozenset(), frozenset({5}))
    specs = select_queries(manifest, multi_query=True)
    assert len(specs) == 2
    for spec in specs:
        assert len(spec.query_image_ids) == 3  # same-camera pool only


def test_query_count_matches_camera_coverage(market_root):
    manifest = load_manifest(market_root, "market")
    specs = select_queries(manifest)
    cams_per_id = {}
    for m in manifest.images:
        if m.role == "query":
            cams_per_id.setdefault(m.person_id, set()).add(m.camera_id)
    assert len(specs) == sum(len(c) for c in cams_per_id.values())


def test_partition_and_distractor_rules(market_root):
    manifest = load_manifest(market_root, "market")
    for m in manifest.images:
        assert m.role in ("train", "gallery", "query")
        if m.quality == "distractor":
            assert m.role == "gallery"
            assert m.person_id == 0
