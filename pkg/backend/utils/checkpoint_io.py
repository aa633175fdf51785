"""
Binary checkpoint container.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic b"HEMGENCK"
    8       4     container format version (uint32)
    12      8     header length H in bytes (uint64)
    20      H     header: UTF-8 JSON, keys sorted
    20+H    ...   tensor payload: float64 little-endian, C order, tensors
                  concatenated in header order

The header is ``{"kind": str, "meta": {...}, "tensors": [{"name", "shape",
"offset", "nbytes"}, ...]}`` with tensors sorted by name and offsets relative
to the payload start. Nothing time-dependent is written, so saving the same
object twice yields identical bytes.
"""

import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np
import orjson

from utils.errors import CheckpointError

MAGIC = b"HEMGENCK"
CONTAINER_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def encode(kind: str, meta: Mapping, tensors: Mapping[str, np.ndarray]) -> bytes:
    entries = []
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f8"))
        raw = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": len(payload), "nbytes": len(raw)}
        )
        payload.extend(raw)
    header = orjson.dumps(
        {"kind": kind, "meta": meta, "tensors": entries}, option=orjson.OPT_SORT_KEYS
    )
    return _PREFIX.pack(MAGIC, CONTAINER_VERSION, len(header)) + header + bytes(payload)


def decode(blob: bytes, expected_kind: str) -> Tuple[dict, Dict[str, np.ndarray]]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError("Checkpoint truncated before header")
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError("Not a hemgen checkpoint (bad magic)")
    if version != CONTAINER_VERSION:
        raise CheckpointError(
            f"Checkpoint container version {version} is not supported (expected {CONTAINER_VERSION})"
        )
    start = _PREFIX.size
    try:
        header = orjson.loads(blob[start : start + header_len])
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"Corrupt checkpoint header: {e}") from e
    if header.get("kind") != expected_kind:
        raise CheckpointError(
            f"Checkpoint holds {header.get('kind')!r}, expected {expected_kind!r}"
        )

    payload = memoryview(blob)[start + header_len :]
    tensors: Dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(payload):
            raise CheckpointError(f"Tensor {entry['name']!r} runs past end of file")
        arr = np.frombuffer(payload[lo:hi], dtype="<f8").astype(np.float64)
        tensors[entry["name"]] = arr.reshape(entry["shape"])
    return header["meta"], tensors


def write(path: Union[str, Path], kind: str, meta: Mapping, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(kind, meta, tensors))
    return path


def read(path: Union[str, Path], expected_kind: str) -> Tuple[dict, Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    return decode(path.read_bytes(), expected_kind)
