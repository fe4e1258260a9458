"""Versioned binary checkpoints: magic, format version, config echo,
little-endian float64 parameter payload, trailing SHA-256 checksum."""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np
import torch

MAGIC = b"DRCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _registry():
    from .flow import CouplingFlow
    from .ar import ARModel
    from .encoder import Encoder

    return {"flow": CouplingFlow, "ar": ARModel, "encoder": Encoder}


def checkpoint_save(model, path) -> None:
    state = model.state_dict()
    names = [n for n in state if state[n].is_floating_point()]
    header = {
        "kind": model.kind,
        "config": model.config_dict(),
        "train_config": getattr(model, "train_config_echo", None),
        "train_curve": getattr(model, "train_curve", None),
        "params": [[n, list(state[n].shape)] for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(
        state[n].numpy().astype("<f8").tobytes() for n in names
    )
    body = (
        MAGIC
        + struct.pack("<I", VERSION)
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
    )
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


def checkpoint_load(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 44 or blob[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise CheckpointError(f"checksum mismatch (corrupt or truncated): {path}")
    version = struct.unpack_from("<I", body, 4)[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack_from("<I", body, 8)[0]
    try:
        header = json.loads(body[12 : 12 + hlen])
    except ValueError as e:
        raise CheckpointError(f"corrupt checkpoint header: {path}") from e
    kind = header["kind"]
    registry = _registry()
    if kind not in registry:
        raise CheckpointError(f"unknown model kind {kind!r}")
    model = registry[kind](**header["config"])

    state = model.state_dict()
    pos = 12 + hlen
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos)
        pos += count * 8
        state[name] = torch.as_tensor(arr.copy().reshape(shape))
    if pos != len(body):
        raise CheckpointError(f"parameter payload size mismatch in {path}")
    model.load_state_dict(state)
    if header.get("train_curve") is not None:
        model.train_curve = header["train_curve"]
    if header.get("train_config") is not None:
        model.train_config_echo = header["train_config"]
    return model
