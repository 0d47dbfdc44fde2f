"""IDX ingestion and the synthetic oriented-texture generator."""

import struct

import numpy as np
import pytest

from nanonas.data import (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, Dataset, load_idx,
                          synth_classification, write_idx)
from nanonas.errors import ConfigError, FormatError


def _write_pair(tmp_path, images, labels, name="d"):
    ip = tmp_path / f"{name}-images.idx"
    lp = tmp_path / f"{name}-labels.idx"
    write_idx(ip, lp, images, labels)
    return ip, lp


class TestIdx:
    def test_single_image_fixture(self, tmp_path):
        ip = tmp_path / "one-images.idx"
        lp = tmp_path / "one-labels.idx"
        with open(ip, "wb") as f:
            f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, 1, 2, 2))
            f.write(bytes([255, 0, 128, 64]))
        with open(lp, "wb") as f:
            f.write(struct.pack(">II", IDX_LABELS_MAGIC, 1))
            f.write(bytes([1]))
        ds = load_idx(ip, lp, valid_fraction=0.0)
        assert ds.images.shape == (1, 1, 2, 2)
        assert ds.images[0, 0, 0, 0] == 1.0  # pixel 255 -> 1.0
        assert ds.labels[0] == 1

    def test_truncated_file_reports_offset(self, tmp_path):
        ip = tmp_path / "trunc-images.idx"
        with open(ip, "wb") as f:
            f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, 2, 3, 3))
            f.write(bytes(10))  # 18 data bytes expected
        lp = tmp_path / "trunc-labels.idx"
        with open(lp, "wb") as f:
            f.write(struct.pack(">II", IDX_LABELS_MAGIC, 2))
            f.write(bytes([0, 1]))
        with pytest.raises(FormatError, match="offset 16"):
            load_idx(ip, lp)

    def test_bad_magic(self, tmp_path):
        ip = tmp_path / "bad-images.idx"
        with open(ip, "wb") as f:
            f.write(struct.pack(">IIII", 0xDEADBEEF, 1, 1, 1))
            f.write(bytes(1))
        with pytest.raises(FormatError, match="bad magic 0xdeadbeef"):
            load_idx(ip, tmp_path / "whatever.idx")

    def test_roundtrip_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(20, 1, 5, 5)).astype(np.float64) / 255.0
        labels = rng.integers(0, 4, size=20)
        ip, lp = _write_pair(tmp_path, images, labels)
        ds = load_idx(ip, lp, seed=3)
        np.testing.assert_array_equal(ds.images, images)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_split_deterministic_and_disjoint(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.uniform(size=(50, 1, 4, 4))
        labels = rng.integers(0, 3, size=50)
        ip, lp = _write_pair(tmp_path, images, labels)
        a = load_idx(ip, lp, seed=7)
        b = load_idx(ip, lp, seed=7)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)
        assert len(set(a.train_idx) & set(a.valid_idx)) == 0
        assert len(a.train_idx) + len(a.valid_idx) == 50


class TestSynth:
    def test_same_seed_bitwise_identical(self):
        a = synth_classification(classes=4, n=40, image_size=12, seed=9)
        b = synth_classification(classes=4, n=40, image_size=12, seed=9)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)

    def test_one_image_per_class(self):
        ds = synth_classification(classes=5, n=5, image_size=8, seed=0)
        assert sorted(ds.labels.tolist()) == [0, 1, 2, 3, 4]
        assert all(c == 1 for c in ds.per_class_counts.values())

    def test_normalization_and_ranges(self):
        ds = synth_classification(classes=3, n=60, image_size=10, seed=2)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0
        assert ds.labels.min() >= 0 and ds.labels.max() < 3

    def test_min_classes(self):
        with pytest.raises(ConfigError):
            synth_classification(classes=1, n=10)

    def test_split_validates(self):
        with pytest.raises(ConfigError, match="disjoint"):
            Dataset(np.zeros((4, 1, 2, 2)), np.zeros(4, dtype=np.int64), 2,
                    np.array([0, 1]), np.array([1, 2]))
