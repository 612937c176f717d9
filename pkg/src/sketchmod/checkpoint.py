"""Versioned binary checkpoints: JSON header + little-endian float payload."""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"SKMCKPT\x00"
FORMAT_VERSION = 1


class CheckpointMismatch(RuntimeError):
    """Checkpoint header disagrees with the world it is being loaded into."""


def config_hash(config_dict):
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def params_hash(params):
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(path, params, meta=None):
    names = sorted(params)
    header = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointMismatch(f"{path}: bad magic, not a checkpoint file")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len))
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointMismatch(
                f"{path}: format version {header.get('version')} != {FORMAT_VERSION}"
            )
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise CheckpointMismatch(f"{path}: truncated payload at {entry['name']}")
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return params, header["meta"]
