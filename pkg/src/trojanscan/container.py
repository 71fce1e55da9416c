"""Self-describing binary container used for model and dataset files.

Layout:
  bytes 0-3   magic ``TSCP``
  bytes 4-7   format version, little-endian u32
  bytes 8-11  JSON header length in bytes, little-endian u32
  ...         UTF-8 JSON header
  ...         raw little-endian float64 blocks, in the order declared by
              the header's ``blocks`` list of ``{"name", "shape"}`` entries

Writes are atomic (temp file + rename). Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError, TruncatedFileError, VersionError

MAGIC = b"TSCP"
FORMAT_VERSION = 1


def atomic_write_bytes(path, payload):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_container(path, header, blocks):
    """``blocks`` is an ordered list of (name, float64 array) pairs."""
    header = dict(header)
    header["blocks"] = [{"name": name, "shape": list(arr.shape)} for name, arr in blocks]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(header_bytes))
    out += header_bytes
    for _, arr in blocks:
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(out))


def read_container(path):
    """Returns (header dict, {block name: float64 array})."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise TruncatedFileError(f"{path}: file shorter than the fixed 12-byte preamble")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version > FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version} is newer than supported {FORMAT_VERSION}"
        )
    header_len = struct.unpack("<I", raw[8:12])[0]
    if len(raw) < 12 + header_len:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: invalid JSON header: {e}") from None
    offset = 12 + header_len
    arrays = {}
    for spec in header.get("blocks", []):
        shape = tuple(int(s) for s in spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise TruncatedFileError(f"{path}: block {spec['name']!r} truncated")
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(shape)
        arrays[spec["name"]] = arr.astype(np.float64)
        offset += nbytes
    return header, arrays


def canonical_json(obj):
    """Deterministic JSON used for reports and hashing."""
    return json.dumps(obj, sort_keys=True, indent=2)
