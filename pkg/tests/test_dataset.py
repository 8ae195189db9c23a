"""Annotation decoding, dataset indexing, and deterministic mask selection."""

import json

import numpy as np
import pytest

from maskedstyle.dataset import (
    decode_segmentation,
    encode_segmentation,
    index_dataset,
    load_image,
    load_mask,
    rle_decode_counts,
    rle_encode_counts,
    save_image,
    save_mask,
    select_random_mask,
)
from maskedstyle.errors import DatasetError
from maskedstyle.fixtures import write_fixture_dataset


# --- run-length codec ---------------------------------------------------------


def test_counts_round_trip_small():
    for runs in ([6], [0, 6], [2, 3, 1], [300, 2, 1000, 5], [0, 1, 1, 1, 1, 2]):
        assert rle_decode_counts(rle_encode_counts(runs)) == runs


def test_counts_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        runs = [int(v) for v in rng.integers(0, 5000, size=n)]
        assert rle_decode_counts(rle_encode_counts(runs)) == runs


def test_segmentation_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        mask = (rng.random((h, w)) < 0.4).astype(np.float32)
        record = encode_segmentation(mask)
        assert record["size"] == [h, w]
        np.testing.assert_array_equal(decode_segmentation(record), mask)


def test_segmentation_column_major_layout():
    # hand-built: 2x3 mask with a single pixel at (row 1, col 0); column-major
    # flattening gives runs [1, 1, 4]
    mask = np.zeros((2, 3), np.float32)
    mask[1, 0] = 1.0
    record = encode_segmentation(mask)
    assert rle_decode_counts(record["counts"]) == [1, 1, 4]
    np.testing.assert_array_equal(decode_segmentation(record), mask)


def test_uncompressed_counts_accepted():
    mask = np.zeros((2, 2), np.float32)
    mask[0, 0] = 1.0
    record = {"size": [2, 2], "counts": [0, 1, 3]}
    np.testing.assert_array_equal(decode_segmentation(record), mask)


def test_bad_run_sum_rejected():
    with pytest.raises(ValueError):
        decode_segmentation({"size": [2, 2], "counts": [1, 1]})


# --- image / mask files ----------------------------------------------------------


def test_image_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.random((9, 7, 3)).astype(np.float32)
    path = tmp_path / "img.png"
    save_image(img, path)
    loaded = load_image(path)
    assert np.abs(loaded - img).max() <= 0.5 / 255.0 + 1e-6


def test_mask_threshold_rule(tmp_path):
    from PIL import Image

    data = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    path = tmp_path / "m.png"
    Image.fromarray(data, mode="L").save(path)
    np.testing.assert_array_equal(load_mask(path), [[0.0, 0.0, 1.0, 1.0]])


def test_mask_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mask = (rng.random((8, 8)) < 0.5).astype(np.float32)
    path = tmp_path / "m.png"
    save_mask(mask, path)
    np.testing.assert_array_equal(load_mask(path), mask)


# --- indexing ----------------------------------------------------------------------


def test_index_empty_directory_fatal(tmp_path):
    with pytest.raises(DatasetError):
        index_dataset(tmp_path)


def test_index_counts_and_integrity(tmp_path):
    write_fixture_dataset(tmp_path / "data", n=3, size=32)
    index = index_dataset(tmp_path / "data")
    assert len(index) == 3
    again = index_dataset(tmp_path / "data")
    assert index.integrity_hash == again.integrity_hash
    # content changes move the hash
    first = index.entries[0].annotation_path
    first.write_text(first.read_text() + " ")
    changed = index_dataset(tmp_path / "data")
    assert changed.integrity_hash != index.integrity_hash


def test_index_skips_corrupt_annotations(tmp_path, caplog):
    root = tmp_path / "data"
    write_fixture_dataset(root, n=3, size=32)
    bad = sorted(root.glob("*.json"))[0]
    bad.write_text("{not json")
    index = index_dataset(root)
    assert len(index) == 2


def test_index_requires_annotation_siblings(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    save_image(np.zeros((4, 4, 3), np.float32), root / "orphan.png")
    with pytest.raises(DatasetError):
        index_dataset(root)


# --- mask selection -----------------------------------------------------------------


def _entry_with_areas(tmp_path, areas, size=20):
    root = tmp_path / "sel"
    root.mkdir(exist_ok=True)
    save_image(np.zeros((size, size, 3), np.float32), root / "img.png")
    annotations = []
    for i, frac in enumerate(areas):
        side = max(1, int(np.sqrt(frac * size * size)))
        mask = np.zeros((size, size), np.float32)
        mask[:side, :side] = 1.0
        annotations.append(
            {"id": i, "area": int(mask.sum()), "segmentation": encode_segmentation(mask)}
        )
    (root / "img.json").write_text(json.dumps({"annotations": annotations}))
    return index_dataset(root).entries[0]


def test_select_only_qualifying_masks(tmp_path):
    entry = _entry_with_areas(tmp_path, [0.002, 0.3])
    chosen = select_random_mask(entry, min_area_fraction=0.02, seed=0)
    assert chosen is not None
    assert chosen.sum() == entry.masks[1].area


def test_select_skips_when_nothing_qualifies(tmp_path):
    entry = _entry_with_areas(tmp_path, [0.002, 0.004])
    assert select_random_mask(entry, min_area_fraction=0.02, seed=0) is None


def test_select_deterministic_per_seed(tmp_path):
    entry = _entry_with_areas(tmp_path, [0.1, 0.2, 0.3, 0.4])
    picks = {select_random_mask(entry, 0.02, seed=s).sum() for s in range(6)}
    a = select_random_mask(entry, 0.02, seed=3)
    b = select_random_mask(entry, 0.02, seed=3)
    np.testing.assert_array_equal(a, b)
    assert len(picks) > 1  # different seeds reach different masks
