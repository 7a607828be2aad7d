"""Training loop: record batches, point subsampling, Adam on pointwise MSE,
held-out validation by record, and weight-file emission."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .augment import augment
from .model import Adam, BranchTrunk
from .records import Record, load_dataset
from .serialize import save_weights, weights_payload

log = logging.getLogger(__name__)


class DivergenceError(Exception):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class TrainReport:
    val_l2_rel: float
    dataset_hash: str
    epochs: int
    seed: int
    loss_history: list[float]
    n_train: int
    n_val: int

    def to_dict(self) -> dict:
        return {
            "val_l2_rel": self.val_l2_rel,
            "dataset_hash": self.dataset_hash,
            "epochs": self.epochs,
            "seed": self.seed,
            "loss_first": self.loss_history[0],
            "loss_last": self.loss_history[-1],
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


def _batch_arrays(records: list[Record], rng, points_per_record: int | None):
    encodings = np.stack([r.encoding for r in records])
    points, owner, targets = [], [], []
    for i, r in enumerate(records):
        n = len(r.vertices)
        if points_per_record is not None and points_per_record < n:
            idx = rng.choice(n, size=points_per_record, replace=False)
        else:
            idx = np.arange(n)
        points.append(r.vertices[idx])
        targets.append(r.solution[idx])
        owner.append(np.full(len(idx), i))
    return (
        encodings,
        np.concatenate(points),
        np.concatenate(owner),
        np.concatenate(targets),
    )


def validation_error(model: BranchTrunk, records: list[Record]) -> float:
    """Mean relative l2 error over records (all vertices)."""
    errs = []
    for r in records:
        pred = model.predict(r.encoding[None, :], r.vertices, np.zeros(len(r.vertices), dtype=int))
        denom = float(np.linalg.norm(r.solution))
        if denom == 0.0:
            continue
        errs.append(float(np.linalg.norm(pred - r.solution)) / denom)
    return float(np.mean(errs))


def train(
    dataset_dir: str,
    epochs: int = 120,
    lr: float = 1e-3,
    arch: dict | None = None,
    seed: int = 0,
    out_weights: str | None = None,
    augment_ops: tuple[str, ...] = ("rotation",),
    scale_range: tuple[float, float] = (0.8, 1.0),
    val_fraction: float = 0.1,
    batch_records: int = 16,
    points_per_record: int = 64,
    log_every: int = 10,
) -> TrainReport:
    arch = {"M": 64, "p": 64, "width": 128, "depth": 3, **(arch or {})}
    records, manifest = load_dataset(dataset_dir)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_val = max(1, int(round(val_fraction * len(records))))
    val_records = [records[i] for i in order[:n_val]]
    train_records = [records[i] for i in order[n_val:]]
    if not train_records:
        raise DivergenceError("no training records after the validation split", [])

    model = BranchTrunk(arch["M"], arch["p"], arch["width"], arch["depth"], seed=seed + 1)
    opt = Adam(model.params(), lr=lr)
    history: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(len(train_records))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(perm), batch_records):
            batch = [train_records[i] for i in perm[lo : lo + batch_records]]
            if augment_ops:
                batch = [augment(r, augment_ops, rng, scale_range) for r in batch]
            enc, pts, owner, tgt = _batch_arrays(batch, rng, points_per_record)
            loss = model.loss_and_grads(enc, pts, owner, tgt)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"loss diverged at epoch {epoch}", history + [loss]
                )
            opt.step(model.params(), model.grads(), model)
            epoch_loss += loss
            n_batches += 1
        history.append(epoch_loss / n_batches)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d: train mse %.3e", epoch, history[-1])

    val = validation_error(model, val_records)
    report = TrainReport(
        val_l2_rel=val,
        dataset_hash=manifest["sha256"],
        epochs=epochs,
        seed=seed,
        loss_history=history,
        n_train=len(train_records),
        n_val=len(val_records),
    )
    if out_weights:
        save_weights(out_weights, weights_payload(model, val, manifest["sha256"]))
    return report
