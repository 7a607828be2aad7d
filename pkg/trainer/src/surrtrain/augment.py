"""On-the-fly record augmentation via solution-preserving transforms.

The plain Laplacian with Dirichlet data admits rotations (values ride along
unchanged) and uniform spatial scalings (values unchanged too).  Rotation
moves the arc-length start vertex, so the boundary encoding is recomputed;
scaling leaves it untouched.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .records import Record, encode

ADMITTED_OPS = ("rotation", "scaling")


class AugmentError(Exception):
    pass


def rotate(record: Record, theta: float) -> Record:
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, s], [-s, c]])
    vertices = record.vertices @ rot
    return replace(
        record,
        vertices=vertices,
        encoding=encode(vertices, record.boundary_edges, record.dirichlet),
    )


def scale(record: Record, s: float) -> Record:
    if s <= 0:
        raise AugmentError("scale factor must be positive")
    return replace(record, vertices=s * record.vertices)


def augment(record: Record, ops, rng: np.random.Generator,
            scale_range: tuple[float, float] = (0.8, 1.0)) -> Record:
    """Apply the selected random transforms to one record."""
    for op in ops:
        if op not in ADMITTED_OPS:
            raise AugmentError(f"op {op!r} not admitted (choose from {ADMITTED_OPS})")
    out = record
    if "rotation" in ops:
        out = rotate(out, float(rng.uniform(0.0, 2.0 * np.pi)))
    if "scaling" in ops:
        out = scale(out, float(rng.uniform(*scale_range)))
    return out
