"""Checkpoint container.

Layout::

    b"DNCCCKPT"            8-byte magic
    uint32 LE              format version
    uint64 LE              header length in bytes
    header                 UTF-8 JSON: model description, epoch, RNG state,
                           block table, payload SHA-256, free-form extras
    payload                raw little-endian float64 blocks, model parameters in
                           declaration order followed by optimizer velocities

Files are written to a temporary sibling and renamed into place, so a crash
never leaves a half-written checkpoint behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError
from .model import EnsembleModel

MAGIC = b"DNCCCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    model: EnsembleModel
    velocities: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, model: EnsembleModel, velocities=None, epoch=0, rng_state=None,
                    extra=None) -> None:
    velocities = velocities or {}
    blocks, chunks = [], []
    for group, arrays in (("param", model.state_arrays()), ("velocity", velocities)):
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            blocks.append({"group": group, "name": name, "shape": list(arr.shape)})
            chunks.append(arr.tobytes())
    payload = b"".join(chunks)
    header = {
        **model.describe(),
        "epoch": int(epoch),
        "rng_state": rng_state or {},
        "blocks": blocks,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREFIX.size:
        raise FormatError(f"{path}: truncated prefix", offset=len(raw))
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)", offset=0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version}", offset=8)
    start = _PREFIX.size
    if len(raw) < start + hlen:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    try:
        header = json.loads(raw[start : start + hlen].decode())
        blocks = header["blocks"]
        model = EnsembleModel.from_description(header)
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: corrupt header ({exc})", offset=start) from None
    payload = raw[start + hlen :]
    expected = sum(8 * int(np.prod(b["shape"], dtype=np.int64)) for b in blocks)
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header describes {expected}",
            offset=start + hlen + min(len(payload), expected),
        )
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise FormatError(f"{path}: payload checksum mismatch", offset=start + hlen)

    params, velocities, pos = {}, {}, 0
    for b in blocks:
        count = int(np.prod(b["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos).reshape(b["shape"])
        pos += 8 * count
        (params if b["group"] == "param" else velocities)[b["name"]] = arr.astype(np.float64)
    try:
        model.load_state_arrays(params)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}", offset=start) from None
    return Checkpoint(model, velocities, header["epoch"], header["rng_state"], header["extra"])
