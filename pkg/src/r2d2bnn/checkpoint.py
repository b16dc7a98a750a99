"""Versioned binary checkpoint container for Bayesian networks.

Layout:

    bytes 0..3    magic b"BNCK"
    bytes 4..7    format version, little-endian uint32 (currently 1)
    bytes 8..15   header length H, little-endian uint64
    bytes 16..16+H  UTF-8 JSON header
    remainder     concatenated float64 little-endian tensor payloads

The JSON header records the architecture, prior configuration,
hyperparameters, seed, and a manifest of named tensors (shape + byte
offset), so a file is self-describing and future versions can migrate.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .layers import BayesNet, HorseshoeState, PriorConfig, ShrinkageState
from .rng import RngState

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"BNCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _net_tensors(net: BayesNet):
    for i, layer in enumerate(net.layers):
        yield f"layer{i}.mu", layer.vw.mu.data
        yield f"layer{i}.rho", layer.vw.rho.data
        yield f"layer{i}.mu_bias", layer.vw.mu_bias.data
        yield f"layer{i}.rho_bias", layer.vw.rho_bias.data
        st = layer.state
        if isinstance(st, ShrinkageState):
            yield f"layer{i}.psi", st.psi
            yield f"layer{i}.phi", st.phi
            yield f"layer{i}.omega", np.array([st.omega])
            yield f"layer{i}.xi", np.array([st.xi])
        elif isinstance(st, HorseshoeState):
            yield f"layer{i}.hs_tau", np.array([st.tau])
            yield f"layer{i}.hs_local", st.local


def save_checkpoint(net: BayesNet, path, seed: int | None = None, extra: dict | None = None) -> None:
    path = Path(path)
    manifest = []
    payload = bytearray()
    for name, arr in _net_tensors(net):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = {
        "format_version": VERSION,
        "arch": [list(e) for e in net.arch],
        "prior": dataclasses.asdict(net.config),
        "seed": seed,
        "tensors": manifest,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def _read_header(fh):
    magic = fh.read(4)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    version = struct.unpack("<I", fh.read(4))[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack("<Q", fh.read(8))[0]
    return json.loads(fh.read(hlen).decode())


def load_checkpoint(path) -> tuple[BayesNet, dict]:
    """Rebuild a BayesNet from a checkpoint; returns (net, header)."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh)
        payload = fh.read()

    arch = [tuple(e) if not isinstance(e[-1], list) else tuple(e[:-1]) + (tuple(e[-1]),) for e in header["arch"]]
    arch = []
    for entry in header["arch"]:
        parts = [tuple(p) if isinstance(p, list) else p for p in entry]
        arch.append(tuple(parts))
    config = PriorConfig(**header["prior"])
    net = BayesNet(arch, config, RngState(header.get("seed") or 0))

    tensors = {}
    for item in header["tensors"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = item["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        tensors[item["name"]] = arr

    for i, layer in enumerate(net.layers):
        layer.vw.mu.data = tensors[f"layer{i}.mu"]
        layer.vw.rho.data = tensors[f"layer{i}.rho"]
        layer.vw.mu_bias.data = tensors[f"layer{i}.mu_bias"]
        layer.vw.rho_bias.data = tensors[f"layer{i}.rho_bias"]
        if isinstance(layer.state, ShrinkageState):
            layer.state = ShrinkageState(
                psi=tensors[f"layer{i}.psi"],
                phi=tensors[f"layer{i}.phi"],
                omega=float(tensors[f"layer{i}.omega"][0]),
                xi=float(tensors[f"layer{i}.xi"][0]),
                a_l=layer.state.a_l,
                b_l=layer.state.b_l,
            )
        elif isinstance(layer.state, HorseshoeState):
            layer.state = HorseshoeState(
                tau=float(tensors[f"layer{i}.hs_tau"][0]),
                local=tensors[f"layer{i}.hs_local"],
            )
    return net, header
