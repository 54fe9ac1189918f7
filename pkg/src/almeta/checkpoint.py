"""Versioned binary checkpoints: header + named tensors + Adam state.

The byte layout is fully deterministic (sorted names, fixed header
encoding), so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigurationError
from .model import ModelConfig
from .nn import ParamStore
from .optim import AdamState

MAGIC = b"ALMC"
FORMAT_VERSION = 1


def save_checkpoint(path, store: ParamStore, mcfg: ModelConfig, adam: AdamState = None):
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": mcfg.to_dict(),
        "config_hash": mcfg.hash(),
        "dtype": np.dtype(store.dtype).name,
        "dims": {k: list(v.shape) for k, v in sorted(store.params.items())},
        "adam": None
        if adam is None
        else {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t},
    }
    tensors = [("param." + k, v) for k, v in sorted(store.params.items())]
    if adam is not None:
        tensors += [("adam.m." + k, v) for k, v in sorted(adam.m.items())]
        tensors += [("adam.v." + k, v) for k, v in sorted(adam.v.items())]
    hblob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hblob)))
        fh.write(hblob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            nb = name.encode()
            arr = np.ascontiguousarray(arr)
            meta = json.dumps({"dtype": arr.dtype.name, "shape": list(arr.shape)}).encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            raw = arr.tobytes()
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)


def load_checkpoint(path):
    """Returns (store, model_config, adam_state, header)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode()
            (mlen,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(mlen))
            (blen,) = struct.unpack("<Q", fh.read(8))
            arr = np.frombuffer(fh.read(blen), dtype=meta["dtype"]).reshape(meta["shape"])
            tensors[name] = arr.copy()
    mcfg = ModelConfig.from_dict(header["model_config"])
    store = ParamStore(dtype=np.dtype(header["dtype"]).type)
    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], t=a["t"])
    for name, arr in tensors.items():
        if name.startswith("param."):
            store.params[name[6:]] = arr
        elif name.startswith("adam.m.") and adam is not None:
            adam.m[name[7:]] = arr
        elif name.startswith("adam.v.") and adam is not None:
            adam.v[name[7:]] = arr
    return store, mcfg, adam, header
