"""Versioned binary checkpoint container.

Layout::

    b"MELOCKPT"                 8-byte magic
    uint32 LE                   format version
    uint64 LE                   header length in bytes
    header                      UTF-8 JSON: metadata plus an entry table
    payload                     raw little-endian arrays, in entry-table order

Each entry records ``name``, ``group`` (param, buffer, adam_m, adam_v),
``dtype`` and ``shape``.  Arrays are written verbatim, so reloading is
bit-exact.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .core import Tensor
from .params import ParamSet

MAGIC = b"MELOCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _entries(params: ParamSet):
    for name, t in params.params.items():
        yield name, "param", t.data
    for name, b in params.buffers.items():
        yield name, "buffer", b
    for name, m in params.m.items():
        yield name, "adam_m", m
    for name, v in params.v.items():
        yield name, "adam_v", v


def save_checkpoint(path, params: ParamSet, meta: dict) -> None:
    table, blobs = [], []
    for name, group, arr in _entries(params):
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        table.append({"name": name, "group": group, "dtype": le.dtype.str, "shape": list(arr.shape)})
        blobs.append(le.tobytes())
    header = {
        "meta": meta,
        "adam_step": params.step,
        "regularized": sorted(params.regularized),
        "entries": table,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)


def load_checkpoint(path):
    """Return ``(params, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 8 + 12
    header = json.loads(raw[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    params = ParamSet()
    for e in header["entries"]:
        dt = np.dtype(e["dtype"])
        n = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
        if offset + n > len(raw):
            raise CheckpointError(f"{path}: truncated payload")
        arr = np.frombuffer(raw, dtype=dt, count=n // dt.itemsize, offset=offset).reshape(e["shape"])
        arr = arr.astype(dt.newbyteorder("="))
        offset += n
        group, name = e["group"], e["name"]
        if group == "param":
            params.params[name] = Tensor(arr, requires_grad=True, name=name, dtype=arr.dtype)
        elif group == "buffer":
            params.buffers[name] = arr
        elif group == "adam_m":
            params.m[name] = arr
        elif group == "adam_v":
            params.v[name] = arr
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    params.step = header["adam_step"]
    params.regularized = set(header["regularized"])
    return params, header["meta"]
