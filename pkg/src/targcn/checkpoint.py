"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TARGCNCK" | u32 version | u32 header length | UTF-8 JSON header
    then one record per tensor, in header["tensors"] order:
    u8 ndim | ndim x u64 dims | float32 data (C order)

The header holds the run config, vocabulary sizes, epoch, optimizer
hyperparameters and per-tensor step counts, and the seed-derivation cursor.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from targcn.config import RunConfig
from targcn.encoder import PARAMETER_ORDER, TARGCN

MAGIC = b"TARGCNCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _tensor_bytes(t: torch.Tensor) -> bytes:
    arr = t.detach().cpu().numpy().astype("<f4", copy=False)
    head = struct.pack("<B", arr.ndim) + b"".join(struct.pack("<Q", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr).tobytes()


def _read_tensor(buf: memoryview, pos: int) -> tuple[np.ndarray, int]:
    (ndim,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    shape = struct.unpack_from("<" + "Q" * ndim, buf, pos)
    pos += 8 * ndim
    n = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(shape).copy()
    return arr, pos + 4 * n


def save_checkpoint(path, model: TARGCN, optimizer=None, epoch: int = 0, extra: dict | None = None) -> None:
    params = dict(model.named_parameters())
    names = list(PARAMETER_ORDER)
    tensors = [params[n] for n in names]
    opt_meta = None
    if optimizer is not None:
        group = optimizer.param_groups[0]
        steps = []
        for n in PARAMETER_ORDER:
            st = optimizer.state.get(params[n], {})
            if st:
                names += [f"exp_avg/{n}", f"exp_avg_sq/{n}"]
                tensors += [st["exp_avg"], st["exp_avg_sq"]]
                steps.append(int(st["step"]))
            else:
                steps.append(0)
        opt_meta = {
            "kind": "adam",
            "lr": group["lr"],
            "betas": list(group["betas"]),
            "eps": group["eps"],
            "weight_decay": group["weight_decay"],
            "steps": steps,
        }
    header = {
        "config": model.config.to_dict(),
        "num_entities": model.num_entities,
        "num_base_relations": model.num_base_relations,
        "num_timestamps": model.num_timestamps,
        "epoch": epoch,
        "optimizer": opt_meta,
        "rng": {"base_seed": model.config.seed, "next_epoch": epoch + 1},
        "tensors": names,
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(hb)) + hb)
        for t in tensors:
            fh.write(_tensor_bytes(t))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a TARGCN checkpoint")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    buf = memoryview(data)
    pos = 16 + hlen
    tensors = {}
    for name in header["tensors"]:
        tensors[name], pos = _read_tensor(buf, pos)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return header, tensors


def load_checkpoint(path, optimizer_factory=None):
    """Rebuild ``(model, optimizer_or_None, header)``.

    ``optimizer_factory(model)`` creates the optimizer whose state is restored.
    """
    header, tensors = read_checkpoint(path)
    cfg = RunConfig(**header["config"])
    model = TARGCN(header["num_entities"], header["num_base_relations"], header["num_timestamps"], cfg)
    params = dict(model.named_parameters())
    with torch.no_grad():
        for n in PARAMETER_ORDER:
            arr = tensors[n]
            if tuple(arr.shape) != tuple(params[n].shape):
                raise CheckpointError(f"shape mismatch for {n}: {arr.shape} vs {tuple(params[n].shape)}")
            params[n].copy_(torch.from_numpy(arr))
    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(model)
        meta = header.get("optimizer")
        if meta:
            for n, step in zip(PARAMETER_ORDER, meta["steps"]):
                if step:
                    optimizer.state[params[n]] = {
                        "step": torch.tensor(float(step)),
                        "exp_avg": torch.from_numpy(tensors[f"exp_avg/{n}"]),
                        "exp_avg_sq": torch.from_numpy(tensors[f"exp_avg_sq/{n}"]),
                    }
    return model, optimizer, header
