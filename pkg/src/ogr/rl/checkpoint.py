"""Deterministic binary checkpoints.

Layout: ``OGRCKPT1`` magic, 8-byte little-endian header length, a canonical
JSON header (version, config hash, architecture, array table), then the raw
little-endian array bytes in header order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .network import ActorCritic

MAGIC = b"OGRCKPT1"
VERSION = 1


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


def dumps(policy: ActorCritic, cfg: dict | None = None, meta: dict | None = None) -> bytes:
    params = policy.params()
    names = sorted(params)
    header = {
        "version": VERSION,
        "config_hash": config_hash(cfg or {}),
        "obs_dim": policy.obs_dim,
        "hidden": list(policy.hidden),
        "heads": list(policy.heads),
        "dtype": np.dtype(policy.dtype).str,
        "arrays": [[n, list(params[n].shape)] for n in names],
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(params[n], dtype=np.dtype(policy.dtype).newbyteorder("<")).tobytes() for n in names)
    return MAGIC + struct.pack("<Q", len(head)) + head + body


def loads(data: bytes) -> tuple[ActorCritic, dict]:
    if data[:8] != MAGIC:
        raise ValueError("not an OGR checkpoint")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + n])
    if header["version"] != VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    dtype = np.dtype(header["dtype"])
    policy = ActorCritic(header["obs_dim"], header["hidden"], header["heads"], dtype=dtype.newbyteorder("=").type)
    params = {}
    off = 16 + n
    for name, shape in header["arrays"]:
        size = int(np.prod(shape)) * dtype.itemsize
        params[name] = np.frombuffer(data[off:off + size], dtype=dtype).reshape(shape)
        off += size
    policy.set_params(params)
    return policy, header


def save(policy: ActorCritic, path, cfg=None, meta=None) -> str:
    data = dumps(policy, cfg, meta)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load(path) -> tuple[ActorCritic, dict]:
    return loads(Path(path).read_bytes())
