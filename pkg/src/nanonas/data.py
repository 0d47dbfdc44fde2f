"""Deterministic dataset ingestion and synthesis for desk-scale classification.

Two sources: classic big-endian IDX files (the format small benchmarks ship
in) and a seeded synthetic generator of oriented-texture patches that tiny
ConvNets separate easily but linear models do not.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Images in [0,1], integer labels, and a disjoint train/valid split."""

    images: np.ndarray          # (N, C, H, W) float64 in [0, 1]
    labels: np.ndarray          # (N,) int64 in [0, classes)
    classes: int
    train_idx: np.ndarray
    valid_idx: np.ndarray
    per_class_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        combined = np.concatenate([self.train_idx, self.valid_idx])
        if len(np.unique(combined)) != n or len(combined) != n:
            raise ConfigError("dataset split must be disjoint and exhaustive")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ConfigError("labels outside [0, classes)")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise ConfigError("images must be normalized to [0, 1]")
        if not self.per_class_counts:
            vals, counts = np.unique(self.labels, return_counts=True)
            self.per_class_counts = {int(v): int(c) for v, c in zip(vals, counts)}

    @property
    def train(self):
        return self.images[self.train_idx], self.labels[self.train_idx]

    @property
    def valid(self):
        return self.images[self.valid_idx], self.labels[self.valid_idx]


def _split(n: int, seed: int, valid_fraction: float = 0.2):
    order = np.random.default_rng(seed).permutation(n)
    n_valid = int(round(n * valid_fraction))
    return order[n_valid:], order[:n_valid]


def _read_exact(f, count, path, what):
    data = f.read(count)
    if len(data) != count:
        raise FormatError(
            f"{path}: truncated while reading {what}: wanted {count} bytes at "
            f"offset {f.tell() - len(data)}, got {len(data)}")
    return data


def _parse_idx(path, expected_magic, expected_dims):
    with open(path, "rb") as f:
        magic = struct.unpack(">I", _read_exact(f, 4, path, "magic"))[0]
        if magic != expected_magic:
            raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, "
                              f"expected 0x{expected_magic:08x}")
        dims = struct.unpack(f">{expected_dims}I",
                             _read_exact(f, 4 * expected_dims, path, "dimensions"))
        count = int(np.prod(dims))
        raw = _read_exact(f, count, path, f"{count} data bytes")
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"{path}: {len(trailing)}+ unexpected trailing bytes "
                              f"at offset {f.tell() - 1}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, seed: int = 0, valid_fraction: float = 0.2) -> Dataset:
    """Parse an IDX image/label file pair into a normalized, split Dataset."""
    raw_images = _parse_idx(images_path, IDX_IMAGES_MAGIC, 3)
    raw_labels = _parse_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise FormatError(f"image count {raw_images.shape[0]} != label count {raw_labels.shape[0]}")
    images = raw_images.astype(np.float64)[:, None] / 255.0
    labels = raw_labels.astype(np.int64)
    classes = int(labels.max()) + 1 if labels.size else 0
    train_idx, valid_idx = _split(len(labels), seed, valid_fraction)
    return Dataset(images, labels, classes, train_idx, valid_idx)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Emit an IDX pair (bit-exact classic layout); images are [0,1] floats."""
    arr = np.clip(np.round(np.asarray(images) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 4:
        if arr.shape[1] != 1:
            raise ConfigError("IDX stores single-channel images")
        arr = arr[:, 0]
    n, h, w = arr.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(arr.tobytes())
    lab = np.asarray(labels, dtype=np.uint8)
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(lab)))
        f.write(lab.tobytes())


def synth_classification(classes: int = 4, n: int = 2000, image_size: int = 28,
                         seed: int = 0, noise: float = 0.18,
                         valid_fraction: float = 0.2) -> Dataset:
    """Class-conditional oriented gratings with random phase and noise.

    Orientation carries the label; the random phase defeats template/linear
    classifiers while remaining trivial for a conv + pooling stack.
    """
    if classes < 2:
        raise ConfigError(f"synth_classification needs >= 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % classes
    yy, xx = np.meshgrid(np.arange(image_size), np.arange(image_size), indexing="ij")
    images = np.empty((n, 1, image_size, image_size))
    freq = 2.0 * np.pi * 3.0 / image_size
    for i in range(n):
        theta = np.pi * labels[i] / classes + rng.normal(0.0, 0.04)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        f = freq * rng.uniform(0.9, 1.1)
        wave = np.sin(f * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        img = 0.5 + 0.38 * wave + rng.normal(0.0, noise, size=wave.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0)
    train_idx, valid_idx = _split(n, seed + 1, valid_fraction)
    return Dataset(images, labels, classes, train_idx, valid_idx)
