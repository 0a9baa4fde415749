"""Binary array container: round trips, determinism, corruption detection."""

import numpy as np
import pytest

from brnet.arrayio import ContainerError, read_arrays, write_arrays


def test_round_trip_preserves_dtype_shape_values(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "f32": rng.standard_normal((3, 5)).astype(np.float32),
        "f64": rng.standard_normal((2, 2, 2)),
        "u8": (rng.random((4, 4)) < 0.5).astype(np.uint8),
        "i32": rng.integers(-100, 100, size=(7,)).astype(np.int32),
        "scalar": np.float64(3.5),
    }
    path = tmp_path / "pack.bin"
    write_arrays(path, arrays)
    got = read_arrays(path)
    assert sorted(got) == sorted(arrays)
    for k in arrays:
        want = np.asarray(arrays[k])
        assert got[k].dtype == want.dtype
        assert got[k].shape == want.shape
        assert np.array_equal(got[k], want)


def test_write_is_byte_deterministic(tmp_path):
    arrays = {"b": np.arange(6.0).reshape(2, 3), "a": np.ones((3,), np.uint8)}
    p1, p2 = tmp_path / "one.bin", tmp_path / "two.bin"
    write_arrays(p1, arrays)
    write_arrays(p2, {"a": arrays["a"], "b": arrays["b"]})  # other insert order
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a container at all")
    with pytest.raises(ContainerError):
        read_arrays(path)


def test_corrupt_payload_detected(tmp_path):
    path = tmp_path / "pack.bin"
    write_arrays(path, {"x": np.arange(256, dtype=np.float64)})
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ContainerError):
        read_arrays(path)


def test_truncated_file_detected(tmp_path):
    path = tmp_path / "pack.bin"
    write_arrays(path, {"x": np.arange(64, dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 5])
    with pytest.raises(ContainerError):
        read_arrays(path)
