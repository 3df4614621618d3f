"""
STNS Tensor Container

Binary layout:
    b"STNS" | uint32 little-endian header length | UTF-8 header | payload

The header is a ';'-separated list of key=value pairs carrying the dtype
("f32", "f64" or "u8", plus "u16" for high bit-depth measurements) and the
shape as comma-separated decimal extents, e.g. ``dtype=f32;shape=8,64,64``.
The payload is the row-major little-endian array data. Round trips are
bit-exact.
"""
import os
import struct
import tempfile
from typing import Dict, Tuple

import numpy as np

from app.errors import FormatError

MAGIC = b"STNS"
_LEN = struct.Struct("<I")

DTYPE_CODES: Dict[str, np.dtype] = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "u8": np.dtype("u1"),
    "u16": np.dtype("<u2"),
}


def _dtype_code(dtype: np.dtype) -> str:
    dtype = np.dtype(dtype)
    for code, candidate in DTYPE_CODES.items():
        if dtype.kind == candidate.kind and dtype.itemsize == candidate.itemsize:
            return code
    raise FormatError(f"unsupported dtype {dtype}; expected one of {sorted(DTYPE_CODES)}", 0)


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array to STNS bytes."""
    array = np.asarray(array)
    code = _dtype_code(array.dtype)
    header = f"dtype={code};shape={','.join(str(n) for n in array.shape)}".encode("utf-8")
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes(order="C")
    return MAGIC + _LEN.pack(len(header)) + header + payload


def _parse_header(text: str, offset: int) -> Tuple[np.dtype, Tuple[int, ...]]:
    fields = {}
    for item in text.split(";"):
        if "=" not in item:
            raise FormatError(f"malformed header field {item!r}", offset)
        key, value = item.split("=", 1)
        fields[key] = value
    if "dtype" not in fields or "shape" not in fields:
        raise FormatError("header must carry dtype and shape", offset)
    if fields["dtype"] not in DTYPE_CODES:
        raise FormatError(f"unknown dtype {fields['dtype']!r}", offset)
    try:
        shape = tuple(int(n) for n in fields["shape"].split(",")) if fields["shape"] else ()
    except ValueError:
        raise FormatError(f"malformed shape {fields['shape']!r}", offset)
    if any(n < 1 for n in shape):
        raise FormatError(f"shape extents must be positive, got {shape}", offset)
    return DTYPE_CODES[fields["dtype"]], shape


def decode_tensor(data: bytes) -> np.ndarray:
    """
    Parse STNS bytes into a new array.

    Raises:
        FormatError: bad magic, truncated header or payload, trailing bytes
    """
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError("missing STNS magic", 0)
    offset = len(MAGIC)
    if len(data) < offset + _LEN.size:
        raise FormatError("truncated header length", offset)
    (header_len,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    if len(data) < offset + header_len:
        raise FormatError("truncated header", offset)
    try:
        header = data[offset : offset + header_len].decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("header is not valid UTF-8", offset)
    dtype, shape = _parse_header(header, offset)
    offset += header_len
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    remaining = len(data) - offset
    if remaining < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, found {remaining}", offset + remaining)
    if remaining > expected:
        raise FormatError(f"{remaining - expected} trailing bytes after payload", offset + expected)
    array = np.frombuffer(data, dtype=dtype, count=expected // dtype.itemsize, offset=offset)
    return array.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=directory, delete=False, suffix=".tmp") as temp:
        temp.write(data)
        temp_path = temp.name
    try:
        os.replace(temp_path, path)
    except OSError:
        os.unlink(temp_path)
        raise


def save_tensor(path: str, array: np.ndarray) -> None:
    atomic_write_bytes(path, encode_tensor(array))


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())


def sidecar_path(path: str) -> str:
    return f"{path}.meta"


def write_sidecar(path: str, record: Dict[str, object]) -> None:
    """Write the key=value metadata record that accompanies a tensor file."""
    lines = [f"{key}={value}" for key, value in record.items()]
    atomic_write_bytes(sidecar_path(path), ("\n".join(lines) + "\n").encode("utf-8"))


def read_sidecar(path: str) -> Dict[str, str]:
    meta = sidecar_path(path)
    if not os.path.exists(meta):
        raise FormatError(f"missing sidecar record {meta}", 0)
    record: Dict[str, str] = {}
    offset = 0
    with open(meta, "rb") as f:
        for raw in f:
            line = raw.decode("utf-8").strip()
            if line and not line.startswith("#"):
                if "=" not in line:
                    raise FormatError(f"malformed sidecar line {line!r} in {meta}", offset)
                key, value = line.split("=", 1)
                record[key.strip()] = value.strip()
            offset += len(raw)
    return record
