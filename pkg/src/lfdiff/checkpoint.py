"""DistgUnet checkpoints: magic, header length, JSON header, float32 blob.

Layout::

    b"DISTGNET1" | uint64 little-endian header length | JSON header | tensors

The header lists every tensor's name, shape and byte offset into the blob,
the network configuration and free-form ``extra`` metadata.
"""
from __future__ import annotations

import json
import struct

import numpy as np
import torch

from .errors import LFError
from .lfio import write_bytes_atomic
from .net import DistgNetConfig, DistgUnet

MAGIC = b"DISTGNET1"


def checkpoint_bytes(model: DistgUnet, extra: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {"config": model.config.to_dict(), "params": entries, "extra": extra or {}}
    hbytes = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks)


def save_checkpoint(path, model: DistgUnet, extra: dict | None = None) -> None:
    write_bytes_atomic(path, checkpoint_bytes(model, extra))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Header and a name -> float32 array mapping."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise LFError(f"cannot read checkpoint {path}: {e}") from None
    if not data.startswith(MAGIC):
        raise LFError(f"{path} is not a DISTGNET1 checkpoint")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    blob = memoryview(data)[pos + hlen:]
    tensors = {}
    for e in header["params"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        end = e["offset"] + 4 * n
        if end > len(blob):
            raise LFError(f"checkpoint truncated at {e['name']}")
        tensors[e["name"]] = np.frombuffer(blob[e["offset"]:end], dtype="<f4").reshape(e["shape"])
    return header, tensors


def load_checkpoint(path) -> tuple[DistgUnet, dict]:
    header, tensors = read_checkpoint(path)
    model = DistgUnet(DistgNetConfig(**header["config"]))
    state = model.state_dict()
    if set(state) != set(tensors):
        raise LFError("checkpoint parameters do not match the stored configuration")
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    return model.eval(), header
