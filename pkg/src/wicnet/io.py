"""Binary fixture dumps and network checkpoints.

Two file formats, both fixed-layout and endian-pinned so that byte-level
comparison of two files is meaningful:

* WTN1 tensor dump: magic ``WTN1``, four u32 little-endian dims (b, c, h, w),
  then the f64 little-endian payload in row-major order.
* WCP1 checkpoint: magic ``WCP1``, u32 header length, a canonical JSON
  header (sorted keys, no whitespace) describing the architecture, config,
  dtype, and parameter table, then the concatenated f64 little-endian
  parameter payloads in header order.
"""

import dataclasses
import json
import struct

import numpy as np
import torch

from .errors import DimensionError, FormatError

WTN1_MAGIC = b"WTN1"
WCP1_MAGIC = b"WCP1"


def save_wtn1(path, array):
    """Dump one rank-4 (b, c, h, w) tensor for later replay."""
    a = np.asarray(array, dtype=np.float64)
    if a.ndim != 4:
        raise DimensionError(f"WTN1 stores rank-4 tensors, got rank {a.ndim}")
    with open(path, "wb") as fh:
        fh.write(WTN1_MAGIC)
        fh.write(struct.pack("<4I", *a.shape))
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_wtn1(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WTN1_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    dims = struct.unpack("<4I", blob[4:20])
    n = int(np.prod(dims))
    payload = blob[20:]
    if len(payload) != 8 * n:
        raise FormatError(f"{path}: payload holds {len(payload) // 8} values, "
                          f"dims {dims} need {n}")
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


def _net_dtype(net):
    for v in net.params().values():
        return "f64" if v.dtype == torch.float64 else "f32"
    return "f64"


def save_checkpoint(path, net, meta=None):
    """Write the network's config and every parameter to one file.

    ``meta`` is an arbitrary JSON-serializable dict (task, step count,
    config hash).  Keep wall-clock values out of it if the file is meant
    to be byte-reproducible.
    """
    params = net.params()
    header = {
        "arch": net.arch,
        "config": dataclasses.asdict(net.cfg),
        "dtype": _net_dtype(net),
        "params": [{"name": k, "shape": list(v.shape)}
                   for k, v in params.items()],
        "meta": meta or {},
    }
    enc = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(WCP1_MAGIC)
        fh.write(struct.pack("<I", len(enc)))
        fh.write(enc)
        for v in params.values():
            fh.write(np.ascontiguousarray(
                v.detach().cpu().numpy(), dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild the network a checkpoint was saved from.

    Returns (net, meta).  The architecture is reconstructed from the stored
    config, so the file is self-contained.
    """
    from .networks import WinConfig, build_win, build_win_naive

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != WCP1_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    (hlen,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + hlen].decode())
    cfg = WinConfig(**header["config"])
    builders = {"naive": build_win_naive, "win": build_win}
    if header["arch"] not in builders:
        raise FormatError(f"{path}: unknown arch {header['arch']!r}")
    net = builders[header["arch"]](cfg)
    net.to_dtype(header["dtype"])

    expected = net.params()
    if [p["name"] for p in header["params"]] != list(expected.keys()):
        raise FormatError(f"{path}: parameter table does not match the "
                          "architecture rebuilt from the stored config")
    offset = 8 + hlen
    torch_dtype = torch.float64 if header["dtype"] == "f64" else torch.float32
    for spec in header["params"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        raw = blob[offset:offset + 8 * n]
        if len(raw) != 8 * n:
            raise FormatError(f"{path}: truncated payload at {spec['name']}")
        offset += 8 * n
        value = np.frombuffer(raw, dtype="<f8").reshape(shape)
        if expected[spec["name"]].shape != torch.Size(shape):
            raise FormatError(f"{path}: {spec['name']} has shape {shape}, "
                              f"expected {tuple(expected[spec['name']].shape)}")
        net.set_param(spec["name"], torch.from_numpy(value.copy()).to(torch_dtype))
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return net, header["meta"]
