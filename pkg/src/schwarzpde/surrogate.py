"""Branch-trunk surrogate evaluation for normalized pure-Dirichlet local solves.

The model maps an arc-length encoding of the boundary data (branch) and a
query point (trunk) to a predicted solution value::

    value(x) = sum_i branch_i(b) * trunk_i(x) + output_bias

Weights load from a JSON file; row-major matrices, 64-bit floats.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SurrogateLoadError, UnsupportedBySurrogateError
from .geometry import TriMesh

DEFAULT_BOUNDARY_SAMPLES = 64

_ACTIVATIONS = ("tanh", "id")


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    act: str


@dataclass
class SurrogateModel:
    m: int
    p: int
    branch: list[Layer]
    trunk: list[Layer]
    output_bias: float
    training_report: dict | None = None

    def forward(self, layers: list[Layer], x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        for layer in layers:
            h = h @ layer.w.T + layer.b
            if layer.act == "tanh":
                h = np.tanh(h)
        return h


def _parse_layers(raw, name: str, in_dim: int) -> tuple[list[Layer], int]:
    layers = []
    dim = in_dim
    for idx, item in enumerate(raw):
        label = f"{name} layer {idx}"
        try:
            w = np.asarray(item["w"], dtype=float)
            b = np.asarray(item["b"], dtype=float)
            act = item["act"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SurrogateLoadError(f"{label}: malformed entry ({exc})") from exc
        if w.ndim != 2:
            raise SurrogateLoadError(f"{label}: weight matrix must be 2-D")
        if w.shape[1] != dim:
            raise SurrogateLoadError(
                f"{label}: expected input width {dim}, file has {w.shape[1]}"
            )
        if b.shape != (w.shape[0],):
            raise SurrogateLoadError(f"{label}: bias length {b.shape} != rows {w.shape[0]}")
        if act not in _ACTIVATIONS:
            raise SurrogateLoadError(f"{label}: unknown activation {act!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise SurrogateLoadError(f"{label}: non-finite weights")
        layers.append(Layer(w=w, b=b, act=act))
        dim = w.shape[0]
    return layers, dim


def load_model(path: str | Path) -> SurrogateModel:
    """Load and shape-check a weight file."""
    path = Path(path)
    if not path.exists():
        raise SurrogateLoadError(f"weight file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SurrogateLoadError(f"weight file is not valid JSON: {exc}") from exc
    if raw.get("format_version") != 1:
        raise SurrogateLoadError(f"unsupported format_version {raw.get('format_version')!r}")
    try:
        m = int(raw["M"])
        p = int(raw["p"])
        bias = float(raw["output_bias"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SurrogateLoadError(f"missing or malformed header field: {exc}") from exc
    branch, branch_out = _parse_layers(raw.get("branch", []), "branch", m)
    trunk, trunk_out = _parse_layers(raw.get("trunk", []), "trunk", 2)
    if branch_out != p:
        raise SurrogateLoadError(f"branch output width {branch_out} != latent dim {p}")
    if trunk_out != p:
        raise SurrogateLoadError(f"trunk output width {trunk_out} != latent dim {p}")
    return SurrogateModel(
        m=m, p=p, branch=branch, trunk=trunk, output_bias=bias,
        training_report=raw.get("training_report"),
    )


def boundary_loop(mesh: TriMesh) -> list[int]:
    """The single boundary loop of a mesh, CCW, starting near angle 0 from
    the centroid.  Raises if the boundary has several loops."""
    nb: dict[int, list[int]] = {}
    for i, j in mesh.boundary_edges:
        nb.setdefault(int(i), []).append(int(j))
        nb.setdefault(int(j), []).append(int(i))
    if not nb:
        raise UnsupportedBySurrogateError("mesh has no boundary")
    start = min(nb)
    loop = [start]
    prev = None
    while True:
        cands = [v for v in nb[loop[-1]] if v != prev]
        nxt = cands[0]
        if nxt == start:
            break
        prev = loop[-1]
        loop.append(nxt)
    if len(loop) != len(nb):
        raise UnsupportedBySurrogateError(
            "boundary has multiple loops; surrogate encoding needs a single one"
        )
    pts = mesh.vertices[loop]
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area2 < 0:
        loop = [loop[0]] + loop[:0:-1]
        pts = mesh.vertices[loop]
    centroid = mesh.vertices.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    k = int(np.argmin(np.abs(ang)))
    return loop[k:] + loop[:k]


def encode_boundary(problem, m: int = DEFAULT_BOUNDARY_SAMPLES) -> np.ndarray:
    """Sample the Dirichlet data at m equal arc-length positions.

    `problem` carries a submesh and a spec (see the solver module); only
    pure-Dirichlet local problems are supported.
    """
    mesh = problem.submesh.mesh
    values = problem.spec.dirichlet_values
    if problem.spec.neumann_values or len(problem.submesh.neumann_edge_indices):
        raise UnsupportedBySurrogateError(
            "local problem has flux boundary; the surrogate handles pure Dirichlet data"
        )
    loop = boundary_loop(mesh)
    try:
        vals = np.array([values[v] for v in loop], dtype=float)
    except KeyError as exc:
        raise UnsupportedBySurrogateError(
            f"boundary vertex {exc} has no Dirichlet value"
        ) from exc
    pts = mesh.vertices[loop]
    seg = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    total = float(seg.sum())
    ts = np.concatenate([[0.0], np.cumsum(seg) / total])
    vals_closed = np.concatenate([vals, vals[:1]])
    samples = np.interp(np.arange(m) / m, ts, vals_closed)
    return samples


def evaluate(model: SurrogateModel, branch_input: np.ndarray, query_points: np.ndarray) -> np.ndarray:
    """Predict solution values at query points for one boundary encoding."""
    b = np.asarray(branch_input, dtype=float)
    if b.shape != (model.m,):
        raise ValueError(f"branch input must have length {model.m}, got {b.shape}")
    pts = np.atleast_2d(np.asarray(query_points, dtype=float))
    coeff = model.forward(model.branch, b[None, :])[0]
    feats = model.forward(model.trunk, pts)
    return feats @ coeff + model.output_bias
