"""Binary model checkpoints.

Layout (little-endian): 8-byte magic, uint32 format version, uint32 length
of a UTF-8 JSON descriptor (network spec, input shape, dtype), then one
block per parameter in network order: uint32 ndim, ndim x uint32 shape,
float64 values in C order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .network import Network, NetworkSpec, build_network

MAGIC = b"LBNETCK\x00"
VERSION = 1


def save_checkpoint(network: Network, path) -> None:
    desc = json.dumps({"spec": network.spec.to_dict(), "input_shape": list(network.input_shape),
                       "dtype": network.dtype.name}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(desc)))
        fh.write(desc)
        for (_, name), layer in network.param_items():
            arr = np.ascontiguousarray(layer.params[name], dtype="<f8")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        version, n = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        desc = json.loads(fh.read(n).decode())
        spec = NetworkSpec.from_dict(desc["spec"])
        net = build_network(spec, desc["input_shape"], seed=0, dtype=np.dtype(desc["dtype"]), strict=False)
        for (_, name), layer in net.param_items():
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            if tuple(shape) != layer.params[name].shape:
                raise ValueError(f"{path}: parameter shape {shape} does not match {layer.name}.{name}")
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            layer.params[name] = data.astype(net.dtype)
    return net
