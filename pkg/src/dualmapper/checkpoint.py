"""Checkpoints: a JSON manifest plus one flat little-endian float32 payload.

The manifest lists every tensor by name with its shape and element offset into
the ``.bin`` file. Model entries use the module's state-dict names; optimizer
moments are stored under ``adam.exp_avg.<name>`` / ``adam.exp_avg_sq.<name>``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .model import DualMapper

FORMAT = "dualmapper-ckpt/1"


def _collect(model: DualMapper, optimizer: torch.optim.Optimizer | None):
    entries = list(model.state_dict().items())
    steps = {}
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                st = optimizer.state.get(p)
                if not st:
                    continue
                n = names[id(p)]
                entries.append((f"adam.exp_avg.{n}", st["exp_avg"]))
                entries.append((f"adam.exp_avg_sq.{n}", st["exp_avg_sq"]))
                steps[n] = int(st["step"])
    return entries, steps


def save_checkpoint(path, model: DualMapper, optimizer=None, meta: dict | None = None) -> Path:
    """Write ``<path>.json`` and ``<path>.bin``; returns the manifest path."""
    path = Path(path).with_suffix("")
    entries, steps = _collect(model, optimizer)
    tensors, chunks, offset = [], [], 0
    for name, t in entries:
        arr = t.detach().cpu().numpy().astype("<f4").ravel()
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr)
        offset += arr.size
    manifest = {
        "format": FORMAT,
        "model": {"width": model.width},
        "payload": path.name + ".bin",
        "tensors": tensors,
        "adam_steps": steps,
        "meta": meta or {},
    }
    payload = np.concatenate(chunks) if chunks else np.zeros(0, "<f4")
    path.with_suffix(".bin").write_bytes(payload.tobytes())
    manifest_path = path.with_suffix(".json")
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path


def _read(path):
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    payload = np.frombuffer((path.parent / manifest["payload"]).read_bytes(), dtype="<f4")
    arrays = {
        e["name"]: payload[e["offset"] : e["offset"] + e["count"]].reshape(e["shape"]) for e in manifest["tensors"]
    }
    return manifest, arrays


def load_checkpoint(path) -> tuple[DualMapper, dict]:
    """Rebuild the model from a manifest; returns it with the manifest dict."""
    manifest, arrays = _read(path)
    model = DualMapper(width=int(manifest["model"]["width"]))
    state = model.state_dict()
    missing = [k for k in state if k not in arrays]
    if missing:
        raise ValueError(f"{path}: checkpoint lacks {missing[:5]}")
    model.load_state_dict({k: torch.from_numpy(arrays[k].copy()).to(v.dtype) for k, v in state.items()})
    return model, manifest


def restore_optimizer(path, model: DualMapper, optimizer: torch.optim.Optimizer) -> None:
    """Load saved Adam moments into ``optimizer``, which must wrap ``model``'s parameters."""
    manifest, arrays = _read(path)
    params = dict(model.named_parameters())
    for n, step in manifest["adam_steps"].items():
        optimizer.state[params[n]] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(arrays[f"adam.exp_avg.{n}"].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"adam.exp_avg_sq.{n}"].copy()),
        }
