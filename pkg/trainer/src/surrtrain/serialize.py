"""Weight-file emission in the solver's JSON schema (atomic write)."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .model import BranchTrunk


def _layers_payload(mlp) -> list[dict]:
    return [
        {"w": w.tolist(), "b": b.tolist(), "act": act}
        for w, b, act in zip(mlp.weights, mlp.biases, mlp.acts)
    ]


def weights_payload(model: BranchTrunk, val_l2_rel: float, dataset_hash: str) -> dict:
    return {
        "format_version": 1,
        "M": model.m,
        "p": model.p,
        "branch": _layers_payload(model.branch),
        "trunk": _layers_payload(model.trunk),
        "output_bias": float(model.output_bias),
        "training_report": {
            "val_l2_rel": float(val_l2_rel),
            "dataset_hash": dataset_hash,
        },
    }


def save_weights(path: str | Path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
