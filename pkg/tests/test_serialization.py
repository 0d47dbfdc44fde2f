"""Checkpoint container format."""

import numpy as np
import pytest

from nanonas.errors import FormatError
from nanonas.serialization import load_checkpoint, save_checkpoint


def test_roundtrip_preserves_shapes_and_values(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"w": rng.normal(size=(3, 4, 5)), "scalar": np.asarray(2.5),
              "vec": rng.normal(size=7)}
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, arrays)
    back = load_checkpoint(path)
    assert set(back) == set(arrays)
    for k in arrays:
        assert back[k].shape == np.asarray(arrays[k]).shape
        np.testing.assert_array_equal(back[k], arrays[k])


def test_identical_state_identical_bytes(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.asarray(1.0)}
    p1, p2 = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    save_checkpoint(p1, arrays)
    save_checkpoint(p2, {k: v.copy() for k, v in arrays.items()})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"w": np.ones(10)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(FormatError, match="past end"):
        load_checkpoint(path)
