"""Training/validation dataset synthesis: random shapes, sampled boundary and
coefficient data per equation recipe, exact solutions, and JSON export.

Boundary data is piecewise linear: one uniform draw per shape corner,
interpolated along the arc (corners are recovered from the boundary tags).
Interior fields stay iid per vertex.  Value recipes:

  plain Laplacian / nonlinear    boundary corner values U[0,1]
  mixed                          20% pure Dirichlet U[0,1]; otherwise one
                                 connected flux arc shorter than half the
                                 boundary, with r ~ U[0.5,1] shrinking either
                                 the Dirichlet or the flux range (even odds)
  diffusion with source          boundary U[0,r], r ~ U[0.3,1]; a and f iid
                                 U[0,1] per vertex (a clipped below at 0.01
                                 to keep the operator coercive)
  heat                           boundary and u_0 in U[0,1] (u_0 iid per
                                 vertex); alpha ~ U[0.8,1]; dt = 0.01 with
                                 10 recorded steps
"""
from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .errors import SchwarzPdeError
from .fem import Equation, ProblemSpec, solve_direct
from .geometry import TriMesh, extract_submesh, random_simple_polygon, triangulate
from .surrogate import DEFAULT_BOUNDARY_SAMPLES, boundary_loop, encode_boundary
from .symmetry import apply_forward, apply_solution_forward, fit_normalizer

log = logging.getLogger(__name__)

DEFAULT_MESH_RESOLUTION = 0.05
DARCY_COEFF_FLOOR = 0.01
HEAT_DT = 0.01
HEAT_STEPS = 10


def _child_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _segment_corners(mesh: TriMesh, loop: list[int]) -> list[int]:
    """Positions in the loop where the boundary tag changes (shape corners).

    Generated meshes tag boundary edges by originating polygon edge, so tag
    changes recover the polygon's corners.  Boundaries with fewer than three
    tagged segments get eight evenly spaced pseudo-corners instead.
    """
    tag_of = {}
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        tag_of[(min(int(i), int(j)), max(int(i), int(j)))] = tag
    n = len(loop)
    edge_tags = [
        tag_of[(min(loop[i], loop[(i + 1) % n]), max(loop[i], loop[(i + 1) % n]))]
        for i in range(n)
    ]
    corners = [i for i in range(n) if edge_tags[i] != edge_tags[i - 1]]
    if len(corners) < 3:
        corners = [round(k * n / 8) for k in range(8)]
        corners = sorted(set(min(c, n - 1) for c in corners))
    return corners


def _boundary_field(mesh: TriMesh, rng: np.random.Generator, lo: float, hi: float) -> dict[int, float]:
    """Piecewise-linear boundary data: one uniform draw per shape corner,
    interpolated along the arc between corners onto every boundary vertex."""
    loop = boundary_loop(mesh)
    n = len(loop)
    pts = mesh.vertices[loop]
    seg = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])  # arc[i] at loop[i], arc[n] = total
    corners = _segment_corners(mesh, loop)
    values = rng.uniform(lo, hi, size=len(corners))

    out: dict[int, float] = {}
    for ci in range(len(corners)):
        a = corners[ci]
        b = corners[(ci + 1) % len(corners)]
        va, vb = values[ci], values[(ci + 1) % len(corners)]
        arc_a = arc[a]
        arc_b = arc[b] if b > a else arc[b] + arc[n]
        span = max(arc_b - arc_a, 1e-300)
        i = a
        while True:
            pos = arc[i] if i >= a else arc[i] + arc[n]
            t = (pos - arc_a) / span
            out[int(loop[i])] = float((1.0 - t) * va + t * vb)
            if i == b:
                break
            i = (i + 1) % n
    return out


def sample_boundary(
    equation: Equation, mesh: TriMesh, rng_seed: int
) -> tuple[ProblemSpec, TriMesh]:
    """Draw boundary (and field) data for one sample.

    Returns the spec together with the mesh, which is re-tagged when a flux
    arc is drawn (mixed equation only).
    """
    rng = np.random.default_rng(rng_seed)

    if equation in (Equation.LAPLACE_DIRICHLET, Equation.NONLINEAR_LAPLACE):
        return ProblemSpec(equation, _boundary_field(mesh, rng, 0.0, 1.0)), mesh

    if equation == Equation.DARCY:
        r = float(rng.uniform(0.3, 1.0))
        bc = _boundary_field(mesh, rng, 0.0, r)
        a = np.clip(rng.uniform(size=mesh.n_vertices), DARCY_COEFF_FLOOR, 1.0)
        f = rng.uniform(size=mesh.n_vertices)
        return ProblemSpec(equation, bc, coeff_a=a, source_f=f), mesh

    if equation == Equation.HEAT:
        bc = _boundary_field(mesh, rng, 0.0, 1.0)
        return (
            ProblemSpec(
                equation,
                bc,
                alpha=float(rng.uniform(0.8, 1.0)),
                initial_u0=rng.uniform(size=mesh.n_vertices),
                n_steps=HEAT_STEPS,
                dt=HEAT_DT,
            ),
            mesh,
        )

    if equation == Equation.LAPLACE_MIXED:
        if rng.uniform() < 0.2:
            return ProblemSpec(equation, _boundary_field(mesh, rng, 0.0, 1.0)), mesh
        return _sample_mixed(mesh, rng)

    raise SchwarzPdeError(f"no sampling recipe for {equation}")


def _sample_mixed(mesh: TriMesh, rng: np.random.Generator) -> tuple[ProblemSpec, TriMesh]:
    loop = boundary_loop(mesh)
    n_loop = len(loop)
    pts = mesh.vertices[loop]
    seg_len = np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)
    total = float(seg_len.sum())

    frac = float(rng.uniform(0.05, 0.5))
    start = int(rng.integers(n_loop))
    target = frac * total
    flux_edges = []
    acc = 0.0
    i = start
    while len(flux_edges) < n_loop - 2:
        step = float(seg_len[i])
        if flux_edges and acc + step > target:
            break
        if acc + step >= 0.5 * total:  # a connected arc must stay under half
            break
        flux_edges.append((loop[i], loop[(i + 1) % n_loop]))
        acc += step
        i = (i + 1) % n_loop
    if not flux_edges:
        # single edge of a closed loop is always shorter than half its length
        flux_edges.append((loop[start], loop[(start + 1) % n_loop]))

    r = float(rng.uniform(0.5, 1.0))
    if rng.uniform() < 0.5:
        dir_hi, flux_hi = r, 1.0
    else:
        dir_hi, flux_hi = 1.0, r

    ud_field = _boundary_field(mesh, rng, 0.0, dir_hi)
    g_field = _boundary_field(mesh, rng, 0.0, flux_hi)

    flux_keys = {(min(a, b), max(a, b)) for a, b in flux_edges}
    new_tags = []
    neumann_values: dict[tuple[int, int], float] = {}
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        key = (min(int(a), int(b)), max(int(a), int(b)))
        if key in flux_keys:
            new_tags.append("neumann:arc")
            neumann_values[key] = 0.5 * (g_field[key[0]] + g_field[key[1]])
        else:
            new_tags.append(tag)
    tagged = TriMesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, new_tags)

    flux_interior = set()
    for v in tagged.boundary_vertices():
        incident = [
            t
            for (a, b), t in zip(tagged.boundary_edges, new_tags)
            if int(v) in (int(a), int(b))
        ]
        if all(t.startswith("neumann") for t in incident):
            flux_interior.add(int(v))
    bc = {
        int(v): ud_field[int(v)]
        for v in tagged.boundary_vertices()
        if int(v) not in flux_interior
    }
    return ProblemSpec(Equation.LAPLACE_MIXED, bc, neumann_values=neumann_values), tagged


def make_record(
    equation: Equation,
    mesh: TriMesh,
    spec: ProblemSpec,
    solution: np.ndarray,
) -> dict:
    """Record a raw sample plus its normalized twin for trainer consumption."""
    sub = extract_submesh(mesh, np.arange(mesh.n_vertices))
    record = fit_normalizer(sub, spec)
    norm_sub, norm_spec = apply_forward(record, sub, spec)
    norm_solution = apply_solution_forward(record, solution)
    try:
        from .schwarz import LocalProblem

        encoding = encode_boundary(
            LocalProblem(k=0, iteration=0, submesh=norm_sub, spec=norm_spec),
            DEFAULT_BOUNDARY_SAMPLES,
        ).tolist()
    except SchwarzPdeError:
        encoding = None  # flux boundary: outside the surrogate's input class
    return {
        "mesh": mesh.to_dict(),
        "spec": spec.to_dict(),
        "solution": np.asarray(solution).tolist(),
        "normalizer": record.to_dict(),
        "boundary_encoding": encoding,
        "normalized": {
            "mesh": norm_sub.mesh.to_dict(),
            "spec": norm_spec.to_dict(),
            "solution": np.asarray(norm_solution).tolist(),
        },
    }


def generate_dataset(
    equation: Equation,
    n_shapes: int,
    samples_per_shape: int,
    mesh_resolution: float = DEFAULT_MESH_RESOLUTION,
    rng_seed: int = 0,
    out_dir: str | Path = "dataset",
    n_min_vertices: int = 3,
    n_max_vertices: int = 12,
) -> dict:
    """Write one JSON record per (shape, sample) and a hashed manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sha = hashlib.sha256()
    count = 0
    skipped: list[dict] = []
    idx = 0
    for i in range(n_shapes):
        shape_seed = _child_seed(rng_seed, i)
        polygon = random_simple_polygon(n_min_vertices, n_max_vertices, rng_seed=shape_seed)
        mesh = triangulate(polygon, mesh_resolution)
        for j in range(samples_per_shape):
            sample_seed = _child_seed(rng_seed, i, j)
            try:
                spec, tagged = sample_boundary(equation, mesh, sample_seed)
                solution = solve_direct(tagged, spec)
                record = make_record(equation, tagged, spec, solution)
            except SchwarzPdeError as exc:
                log.warning("skipping shape %d sample %d: %s", i, j, exc)
                skipped.append({"shape": i, "sample": j, "reason": str(exc)})
                idx += 1
                continue
            payload = json.dumps(record, sort_keys=True, separators=(",", ":"))
            (out / f"record_{idx:06d}.json").write_text(payload)
            sha.update(payload.encode())
            count += 1
            idx += 1
    manifest = {
        "count": count,
        "skipped": skipped,
        "seed": rng_seed,
        "params": {
            "equation": equation.value,
            "n_shapes": n_shapes,
            "samples_per_shape": samples_per_shape,
            "mesh_resolution": mesh_resolution,
            "polygon_vertices": [n_min_vertices, n_max_vertices],
            "boundary_samples": DEFAULT_BOUNDARY_SAMPLES,
        },
        "sha256": sha.hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
