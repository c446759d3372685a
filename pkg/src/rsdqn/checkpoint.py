"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"RSDQNCKP"                     magic, 8 bytes
    uint32 version
    uint32 header length, then that many bytes of UTF-8 JSON
    uint32 tensor count
    per tensor:
        uint16 name length, name (UTF-8)
        uint8 ndim, uint32 * ndim shape
        float64 little-endian payload, C order

The JSON header carries each network's architecture under
``header["networks"][key]``; tensors are named ``"<key>/<param>"``.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .agents import AgentNet, Architecture
from .errors import CheckpointError

MAGIC = b"RSDQNCKP"
VERSION = 1


def dumps(header: dict, tensors: "dict[str, np.ndarray]") -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes) -> "tuple[dict, OrderedDict[str, np.ndarray]]":
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        version, hlen = struct.unpack_from("<II", blob, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 16
        header = json.loads(blob[pos:pos + hlen].decode())
        pos += hlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        tensors: OrderedDict[str, np.ndarray] = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * n > len(blob):
                raise CheckpointError(f"truncated payload for {name!r}")
            tensors[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * n
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return header, tensors


def save(path, header: dict, tensors) -> None:
    Path(path).write_bytes(dumps(header, tensors))


def load(path) -> "tuple[dict, OrderedDict[str, np.ndarray]]":
    return loads(Path(path).read_bytes())


def save_agents(path, nets: "dict[str, AgentNet]", header: dict | None = None) -> None:
    header = dict(header or {})
    header["networks"] = {k: net.arch.to_dict() for k, net in nets.items()}
    tensors = OrderedDict()
    for key, net in nets.items():
        for name, value in net.state_dict().items():
            tensors[f"{key}/{name}"] = value
    save(path, header, tensors)


def load_agents(path) -> "tuple[dict, dict[str, AgentNet]]":
    header, tensors = load(path)
    nets = {}
    for key, arch in header.get("networks", {}).items():
        net = AgentNet(Architecture.from_dict(arch), np.random.default_rng(0))
        prefix = f"{key}/"
        state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
        try:
            net.load_state_dict(state)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"network {key!r} does not match its architecture: {exc}") from exc
        nets[key] = net
    return header, nets
