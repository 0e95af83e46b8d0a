"""Versioned binary model container.

Layout::

    b"CFGM"  uint32 version  uint64 header_len     (little endian)
    header   UTF-8 JSON: {"kind", "config", "meta", "arrays": [{name, dtype, shape}]}
    payload  each array's raw little-endian bytes, in header order

Only fitted parameters are stored. Unlearning caches are rebuilt with
``model.attach(ds)``, which refits and checks the weights bit for bit.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import MissingFile, ValidationError
from .lcfnet import LcfConfig, LcfNetModel
from .numerics import KernelHead, RidgeStats
from .pipeline_a import PipelineAConfig, PipelineAModel

MAGIC = b"CFGM"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def _pack(kind, config, meta, arrays):
    specs, blobs = [], []
    for name, a in arrays:
        a = np.ascontiguousarray(a)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        specs.append({"name": name, "dtype": le.dtype.str, "shape": list(a.shape)})
        blobs.append(le.tobytes())
    header = json.dumps({"kind": kind, "config": config, "meta": meta, "arrays": specs},
                        sort_keys=True).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(blobs)


def _unpack(buf):
    if len(buf) < _PREFIX.size:
        raise ValidationError("model file is truncated")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise ValidationError("not a model file (bad magic)")
    if version != VERSION:
        raise ValidationError(f"unsupported model file version {version}")
    header = json.loads(buf[_PREFIX.size:_PREFIX.size + hlen])
    off = _PREFIX.size + hlen
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        if off + count * dt.itemsize > len(buf):
            raise ValidationError("model file is truncated")
        arrays[spec["name"]] = np.frombuffer(buf, dtype=dt, count=count, offset=off) \
            .reshape(spec["shape"]).astype(dt.newbyteorder("="))
        off += count * dt.itemsize
    return header, arrays


def dumps(model) -> bytes:
    if isinstance(model, PipelineAModel):
        meta = {"leaf_size": model.leaf_size, "num_classes": model.num_classes,
                "alpha": model.stats.alpha}
        arrays = [("W", model.W), ("G", model.stats.G), ("b", model.stats.b)]
        return _pack(model.kind, model.config.to_dict(), meta, arrays)
    if isinstance(model, LcfNetModel):
        cfg = model.config.to_dict()
        cfg["blocks"] = list(cfg["blocks"])
        meta = {"leaf_sizes": list(model.leaf_sizes), "num_classes": model.num_classes,
                "widths": list(model.widths), "sigma": model.head.sigma,
                "lambda_prime": model.head.lambda_prime, "num_layers": len(model.layers),
                "train_residuals": list(model.train_residuals)}
        arrays = [(f"W{k}", W) for k, W in enumerate(model.layers)]
        arrays += [("dual", model.head.dual), ("train_repr", model.head.train_repr),
                   ("train_ids", model.train_ids)]
        if model.whiten_mu is not None:
            arrays += [("whiten_mu", model.whiten_mu), ("whiten_sd", model.whiten_sd)]
        return _pack(model.kind, cfg, meta, arrays)
    raise ValidationError(f"cannot serialize {type(model).__name__}")


def loads(buf: bytes):
    header, arr = _unpack(buf)
    kind, meta = header["kind"], header["meta"]
    if kind == PipelineAModel.kind:
        cfg = PipelineAConfig.from_dict(header["config"])
        stats = RidgeStats(arr["G"], arr["b"], meta["alpha"])
        return PipelineAModel(cfg, arr["W"], stats, meta["leaf_size"], meta["num_classes"])
    if kind == LcfNetModel.kind:
        cfg = LcfConfig.from_dict(header["config"])
        layers = [arr[f"W{k}"] for k in range(meta["num_layers"])]
        head = KernelHead(meta["sigma"], meta["lambda_prime"], arr["dual"], arr["train_repr"])
        return LcfNetModel(cfg, layers, head, arr.get("whiten_mu"), arr.get("whiten_sd"),
                           meta["leaf_sizes"], meta["num_classes"], arr["train_ids"], meta["widths"],
                           train_residuals=meta["train_residuals"])
    raise ValidationError(f"unknown model kind {kind!r}")


def save_model(model, path):
    Path(path).write_bytes(dumps(model))


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"model file not found: {path}")
    return loads(path.read_bytes())
