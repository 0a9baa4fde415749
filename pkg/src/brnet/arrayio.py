"""Deterministic versioned binary container mapping names to shaped arrays.

Used for both model checkpoints and dataset mask archives.  Unlike npz or
pickle-based formats it embeds no timestamps, so identical contents always
produce identical bytes, and every record carries a CRC so corruption is
reported as a parse error instead of silently yielding garbage.
"""

import struct
import zlib

import numpy as np

MAGIC = b"BRNT"
VERSION = 1

_COMPRESS_LEVEL = 6


class ContainerError(ValueError):
    """Malformed or truncated container file."""


def write_arrays(path, arrays):
    """Write a name->ndarray mapping to ``path``.

    Records are written in sorted-name order so equal mappings serialize to
    identical bytes.  Scalars may be passed and are stored as 0-d arrays.
    """
    items = sorted(arrays.items())
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, value in items:
        # ascontiguousarray would promote 0-d inputs to 1-d
        arr = np.asarray(value)
        if arr.ndim:
            arr = np.ascontiguousarray(arr)
        name_b = name.encode("utf-8")
        dtype_b = arr.dtype.str.encode("ascii")
        raw = arr.tobytes()
        payload = zlib.compress(raw, _COMPRESS_LEVEL)
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", len(dtype_b)))
        chunks.append(dtype_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(struct.pack("<QQI", len(raw), len(payload), zlib.crc32(raw)))
        chunks.append(payload)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_arrays(path):
    """Read a container written by :func:`write_arrays`.

    Raises:
        ContainerError: on bad magic/version, truncation, CRC mismatch, or
            any other malformed content; the message names the offending
            record when one is identifiable.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise ContainerError(f"{path}: truncated while reading {what}")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise ContainerError(f"{path}: not a container file (bad magic)")
    version, count = struct.unpack("<HI", take(6, "header"))
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    out = {}
    for idx in range(count):
        where = f"record {idx}"
        (name_len,) = struct.unpack("<H", take(2, where))
        name = take(name_len, where).decode("utf-8", errors="replace")
        where = f"record {idx} ({name!r})"
        (dtype_len,) = struct.unpack("<B", take(1, where))
        dtype_s = take(dtype_len, where).decode("ascii", errors="replace")
        try:
            dtype = np.dtype(dtype_s)
        except TypeError as exc:
            raise ContainerError(f"{path}: {where}: bad dtype {dtype_s!r}") from exc
        (ndim,) = struct.unpack("<B", take(1, where))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim, where))
        raw_len, comp_len, crc = struct.unpack("<QQI", take(20, where))
        payload = take(comp_len, where)
        try:
            raw = zlib.decompress(payload)
        except zlib.error as exc:
            raise ContainerError(f"{path}: {where}: corrupt payload ({exc})") from exc
        if len(raw) != raw_len:
            raise ContainerError(
                f"{path}: {where}: payload length {len(raw)} != declared {raw_len}"
            )
        if zlib.crc32(raw) != crc:
            raise ContainerError(f"{path}: {where}: CRC mismatch")
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if raw_len != expected:
            raise ContainerError(
                f"{path}: {where}: payload size {raw_len} does not match "
                f"shape {shape} of dtype {dtype_s}"
            )
        out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if pos != len(buf):
        raise ContainerError(f"{path}: {len(buf) - pos} trailing bytes after last record")
    return out
