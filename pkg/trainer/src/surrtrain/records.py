"""Dataset record loading.

The solver's data generator writes one JSON file per sample plus a manifest.
Training consumes the *normalized* twin of each record: mesh coordinates
inside the canonical box, Dirichlet values inside the canonical range, and
the matching solution.  The boundary encoding is re-derived here (and checked
against the stored one in tests) so augmented copies can be re-encoded.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BOUNDARY_SAMPLES = 64


@dataclass
class Record:
    """One training sample: geometry, boundary data, and solution values."""

    vertices: np.ndarray          # (n, 2) normalized coordinates
    boundary_edges: np.ndarray    # (m, 2) vertex index pairs
    dirichlet: dict[int, float]   # boundary vertex -> value
    solution: np.ndarray          # (n,) normalized solution
    encoding: np.ndarray          # (BOUNDARY_SAMPLES,) arc-length samples


class DatasetError(Exception):
    pass


def boundary_loop(vertices: np.ndarray, boundary_edges: np.ndarray) -> list[int]:
    """Single CCW boundary loop starting at the vertex nearest angle 0 from
    the centroid (mirrors the solver's encoding convention)."""
    nb: dict[int, list[int]] = {}
    for i, j in boundary_edges:
        nb.setdefault(int(i), []).append(int(j))
        nb.setdefault(int(j), []).append(int(i))
    start = min(nb)
    loop = [start]
    prev = None
    while True:
        nxt = [v for v in nb[loop[-1]] if v != prev][0]
        if nxt == start:
            break
        prev = loop[-1]
        loop.append(nxt)
    if len(loop) != len(nb):
        raise DatasetError("record boundary has multiple loops")
    pts = vertices[loop]
    x, y = pts[:, 0], pts[:, 1]
    if np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
        loop = [loop[0]] + loop[:0:-1]
        pts = vertices[loop]
    centroid = vertices.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    k = int(np.argmin(np.abs(ang)))
    return loop[k:] + loop[:k]


def encode(vertices: np.ndarray, boundary_edges: np.ndarray,
           dirichlet: dict[int, float], m: int = BOUNDARY_SAMPLES) -> np.ndarray:
    loop = boundary_loop(vertices, boundary_edges)
    vals = np.array([dirichlet[v] for v in loop], dtype=float)
    pts = vertices[loop]
    seg = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    ts = np.concatenate([[0.0], np.cumsum(seg) / seg.sum()])
    return np.interp(np.arange(m) / m, ts, np.concatenate([vals, vals[:1]]))


def parse_record(payload: dict) -> Record:
    norm = payload["normalized"]
    vertices = np.asarray(norm["mesh"]["vertices"], dtype=float)
    boundary_edges = np.asarray(
        [e["v"] for e in norm["mesh"]["boundary_edges"]], dtype=int
    )
    dirichlet = {int(k): float(v) for k, v in norm["spec"]["dirichlet_values"].items()}
    solution = np.asarray(norm["solution"], dtype=float)
    if norm["spec"].get("equation") != "laplace_dirichlet":
        raise DatasetError(f"trainer handles laplace_dirichlet, got {norm['spec'].get('equation')}")
    if len(solution) != len(vertices):
        raise DatasetError("solution length does not match the mesh")
    stored = payload.get("boundary_encoding")
    if stored is not None:
        encoding = np.asarray(stored, dtype=float)
    else:
        encoding = encode(vertices, boundary_edges, dirichlet)
    return Record(
        vertices=vertices,
        boundary_edges=boundary_edges,
        dirichlet=dirichlet,
        solution=solution,
        encoding=encoding,
    )


def load_dataset(data_dir: str | Path) -> tuple[list[Record], dict]:
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no manifest.json in {data_dir}")
    manifest = json.loads(manifest_path.read_text())
    records = []
    for path in sorted(data_dir.glob("record_*.json")):
        records.append(parse_record(json.loads(path.read_text())))
    if len(records) != manifest.get("count"):
        raise DatasetError(
            f"manifest promises {manifest.get('count')} records, found {len(records)}"
        )
    if not records:
        raise DatasetError("empty dataset")
    return records, manifest
