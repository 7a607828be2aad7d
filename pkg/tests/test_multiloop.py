"""Externally produced meshes with holes: ingest, validate, solve, iterate."""
import numpy as np
import pytest

from schwarzpde.decomp import build_adjacency, extend, partition
from schwarzpde.fem import Equation, ProblemSpec, l2_relative_error, solve_direct
from schwarzpde.geometry import TriMesh, mesh_from_dict, validate_mesh
from schwarzpde.schwarz import SniConfig, sni_run


def annulus_mesh(n_seg=32, n_rings=3, r_in=0.5, r_out=1.0):
    """Structured triangulated annulus; two tagged boundary loops."""
    radii = np.linspace(r_in, r_out, n_rings + 1)
    ang = 2 * np.pi * np.arange(n_seg) / n_seg
    pts = []
    for r in radii:
        pts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    pts = np.asarray(pts)
    idx = lambda ring, s: ring * n_seg + (s % n_seg)
    tris = []
    for ring in range(n_rings):
        for s in range(n_seg):
            a, b = idx(ring, s), idx(ring, s + 1)
            c, d = idx(ring + 1, s + 1), idx(ring + 1, s)
            tris.append((a, c, b))
            tris.append((a, d, c))
    bedges, btags = [], []
    for s in range(n_seg):
        bedges.append((idx(0, s + 1), idx(0, s)))  # inner loop
        btags.append("dirichlet:inner")
        bedges.append((idx(n_rings, s), idx(n_rings, s + 1)))  # outer loop
        btags.append("dirichlet:outer")
    return TriMesh(pts, np.asarray(tris), np.asarray(bedges), btags)


@pytest.fixture(scope="module")
def annulus():
    mesh = annulus_mesh()
    validate_mesh(mesh)
    return mesh


def test_annulus_roundtrips_through_json(annulus):
    back = mesh_from_dict(annulus.to_dict())
    validate_mesh(back)
    assert np.array_equal(back.triangles, annulus.triangles)


def test_annulus_two_boundary_loops(annulus):
    inner = {int(v) for (i, j), t in zip(annulus.boundary_edges, annulus.boundary_tags)
             if t.endswith("inner") for v in (i, j)}
    outer = {int(v) for (i, j), t in zip(annulus.boundary_edges, annulus.boundary_tags)
             if t.endswith("outer") for v in (i, j)}
    assert inner.isdisjoint(outer)
    assert len(inner) == len(outer) == 32


def test_annulus_direct_solve_matches_radial_profile(annulus):
    # u = log(r_out/r) / log(r_out/r_in) solves the radial problem with
    # u=1 inside, u=0 outside; P1 on this mesh should be close
    bc = {}
    for (i, j), tag in zip(annulus.boundary_edges, annulus.boundary_tags):
        val = 1.0 if tag.endswith("inner") else 0.0
        bc[int(i)] = val
        bc[int(j)] = val
    u = solve_direct(annulus, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    r = np.hypot(annulus.vertices[:, 0], annulus.vertices[:, 1])
    exact = np.log(1.0 / r) / np.log(1.0 / 0.5)
    assert np.max(np.abs(u - exact)) <= 0.02  # discretization error budget


def test_annulus_iterative_matches_direct(annulus):
    rng = np.random.default_rng(9)
    bc = {}
    for (i, j), tag in zip(annulus.boundary_edges, annulus.boundary_tags):
        for v in (int(i), int(j)):
            if v not in bc:
                bc[v] = float(rng.uniform())
    spec = ProblemSpec(Equation.LAPLACE_DIRICHLET, bc)
    truth = solve_direct(annulus, spec)
    config = SniConfig(k=6, depth=2, tau=0.8 / 6, outer_tol=1e-11, max_outer=2000)
    u, diag = sni_run(config, annulus, spec)
    assert diag["converged"]
    assert l2_relative_error(u, truth) <= 1e-6
    # partition really wrapped around the hole: parts cover everything
    graph = build_adjacency(annulus)
    dec = extend(graph, partition(graph, 6, rng_seed=0), 2)
    coverage = np.zeros(annulus.n_vertices, dtype=int)
    for p in dec.parts:
        coverage[p] += 1
    assert np.all(coverage >= 1)
