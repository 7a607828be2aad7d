import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schwarzpde.errors import (
    CoercivityError,
    SpecificationError,
    UndefinedMetricError,
)
from schwarzpde.fem import (
    Equation,
    ProblemSpec,
    assemble,
    assemble_stiffness,
    heat_series,
    l2_relative_error,
    percent_string,
    solve_cg,
    solve_direct,
    spec_from_dict,
)
from schwarzpde.fem import SparseSystem
import scipy.sparse as sp

from schwarzpde.geometry import random_simple_polygon, triangulate

from test_geometry import grid_mesh, unit_square_polygon


# --- oracle: dense Gaussian elimination with partial pivoting ------------------


def dense_solve(a, b):
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        for row in range(col + 1, n):
            m = a[row, col] / a[col, col]
            a[row, col:] -= m * a[col, col:]
            b[row] -= m * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def dirichlet_on_boundary(mesh, fn):
    return {int(v): float(fn(*mesh.vertices[v])) for v in mesh.boundary_vertices()}


# --- assemble -------------------------------------------------------------------


def test_zero_data_gives_zero_solution():
    mesh = grid_mesh(6, 6)
    spec = ProblemSpec(Equation.LAPLACE_DIRICHLET, dirichlet_on_boundary(mesh, lambda x, y: 0.0))
    sys = assemble(mesh, spec)
    interior = ~sys.dirichlet_mask
    assert np.all(sys.rhs[interior] == 0.0)
    u = solve_direct(mesh, spec)
    assert np.allclose(u, 0.0, atol=1e-14)


def test_linear_boundary_data_reproduced_exactly():
    mesh = grid_mesh(7, 5)
    spec = ProblemSpec(Equation.LAPLACE_DIRICHLET, dirichlet_on_boundary(mesh, lambda x, y: x))
    u = solve_direct(mesh, spec)
    assert np.max(np.abs(u - mesh.vertices[:, 0])) <= 1e-10


def test_darcy_unit_coefficient_matches_laplace_matrix():
    mesh = grid_mesh(5, 5)
    bc = dirichlet_on_boundary(mesh, lambda x, y: x + y)
    lap = assemble(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    darcy = assemble(
        mesh,
        ProblemSpec(
            Equation.DARCY,
            bc,
            coeff_a=np.ones(mesh.n_vertices),
            source_f=np.zeros(mesh.n_vertices),
        ),
    )
    diff = (lap.matrix - darcy.matrix).tocoo()
    assert np.max(np.abs(diff.data)) <= 1e-14 if diff.nnz else True
    assert np.allclose(lap.rhs, darcy.rhs, atol=1e-14)


def test_assembled_system_is_symmetric():
    mesh = triangulate(random_simple_polygon(3, 10, rng_seed=5), 0.15)
    rng = np.random.default_rng(0)
    bc = {int(v): float(rng.uniform()) for v in mesh.boundary_vertices()}
    sys = assemble(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    asym = (sys.matrix - sys.matrix.T).tocoo()
    scale = np.max(np.abs(sys.matrix.data))
    assert (np.max(np.abs(asym.data)) if asym.nnz else 0.0) <= 1e-12 * scale


def test_interior_row_sums_vanish():
    mesh = triangulate(random_simple_polygon(3, 12, rng_seed=11), 0.15)
    k = assemble_stiffness(mesh)
    row_sums = np.asarray(k.sum(axis=1)).ravel()
    interior = np.setdiff1d(np.arange(mesh.n_vertices), mesh.boundary_vertices())
    assert np.max(np.abs(row_sums[interior])) <= 1e-12


def test_bc_coverage_validation():
    mesh = grid_mesh(3, 3)
    bc = dirichlet_on_boundary(mesh, lambda x, y: 0.0)
    bc.pop(next(iter(bc)))
    with pytest.raises(SpecificationError):
        assemble(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))


def test_nonpositive_coefficient_rejected():
    mesh = grid_mesh(3, 3)
    bc = dirichlet_on_boundary(mesh, lambda x, y: 0.0)
    a = np.ones(mesh.n_vertices)
    a[4] = -1.0
    with pytest.raises(CoercivityError):
        assemble(
            mesh,
            ProblemSpec(Equation.DARCY, bc, coeff_a=a, source_f=np.zeros(mesh.n_vertices)),
        )


def test_linearization_point_required_iff_nonlinear():
    mesh = grid_mesh(3, 3)
    bc = dirichlet_on_boundary(mesh, lambda x, y: 1.0)
    with pytest.raises(SpecificationError):
        assemble(mesh, ProblemSpec(Equation.NONLINEAR_LAPLACE, bc))
    with pytest.raises(SpecificationError):
        assemble(
            mesh,
            ProblemSpec(Equation.LAPLACE_DIRICHLET, bc),
            linearization_point=np.zeros(mesh.n_vertices),
        )


# --- solve_cg -------------------------------------------------------------------


def test_cg_identity_single_iteration():
    b = np.array([1.0, -2.0, 3.0])
    sys = SparseSystem(sp.identity(3, format="csr"), b, np.zeros(3, dtype=bool))
    assert np.allclose(solve_cg(sys, tol=1e-12, max_iter=2), b)


def test_cg_residual_contract():
    mesh = grid_mesh(8, 8)
    spec = ProblemSpec(
        Equation.LAPLACE_DIRICHLET, dirichlet_on_boundary(mesh, lambda x, y: x * x - y)
    )
    sys = assemble(mesh, spec)
    u = solve_cg(sys, tol=1e-10)
    res = np.linalg.norm(sys.rhs - sys.matrix @ u)
    assert res <= 1e-10 * np.linalg.norm(sys.rhs)


def test_cg_matches_dense_elimination_oracle():
    mesh = grid_mesh(20, 20)
    spec = ProblemSpec(
        Equation.LAPLACE_DIRICHLET,
        dirichlet_on_boundary(mesh, lambda x, y: np.sin(3 * x) + y),
    )
    sys = assemble(mesh, spec)
    u_cg = solve_cg(sys, tol=1e-12)
    u_dense = dense_solve(sys.matrix.toarray(), sys.rhs)
    assert np.max(np.abs(u_cg - u_dense)) <= 1e-8


# --- solve_direct ---------------------------------------------------------------


def test_constant_dirichlet_constant_solution():
    mesh = triangulate(random_simple_polygon(3, 9, rng_seed=3), 0.15)
    bc = {int(v): 4.2 for v in mesh.boundary_vertices()}
    u = solve_direct(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    assert np.max(np.abs(u - 4.2)) <= 1e-12


def test_nonlinear_constant_solution():
    mesh = grid_mesh(5, 5)
    bc = {int(v): 1.7 for v in mesh.boundary_vertices()}
    u = solve_direct(mesh, ProblemSpec(Equation.NONLINEAR_LAPLACE, bc))
    assert np.max(np.abs(u - 1.7)) <= 1e-10


def test_heat_steady_state():
    mesh = grid_mesh(4, 4)
    c = 0.8
    bc = {int(v): c for v in mesh.boundary_vertices()}
    spec = ProblemSpec(
        Equation.HEAT,
        bc,
        alpha=0.9,
        initial_u0=np.full(mesh.n_vertices, c),
        n_steps=6,
        dt=0.01,
    )
    series = heat_series(solve_direct(mesh, spec), mesh.n_vertices)
    assert series.shape == (7, mesh.n_vertices)
    assert np.max(np.abs(series - c)) <= 1e-12


def test_heat_energy_decay_zero_boundary():
    mesh = grid_mesh(6, 6)
    rng = np.random.default_rng(2)
    u0 = rng.uniform(size=mesh.n_vertices)
    u0[mesh.boundary_vertices()] = 0.0
    bc = {int(v): 0.0 for v in mesh.boundary_vertices()}
    spec = ProblemSpec(Equation.HEAT, bc, alpha=1.0, initial_u0=u0, n_steps=10, dt=0.01)
    series = heat_series(solve_direct(mesh, spec), mesh.n_vertices)
    norms = np.linalg.norm(series, axis=1)
    assert np.all(np.diff(norms) <= 1e-12)


def test_picard_fixed_point():
    mesh = triangulate(random_simple_polygon(4, 8, rng_seed=9), 0.2)
    rng = np.random.default_rng(1)
    bc = {int(v): float(rng.uniform()) for v in mesh.boundary_vertices()}
    spec = ProblemSpec(Equation.NONLINEAR_LAPLACE, bc)
    u = solve_direct(mesh, spec)
    again = solve_cg(assemble(mesh, spec, linearization_point=u))
    assert np.linalg.norm(again - u) <= 1e-8 * np.linalg.norm(u)


# --- invariants ------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=300))
def test_galerkin_exactness_on_random_meshes(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.uniform(-2, 2, size=3)
    poly = random_simple_polygon(3, 10, rng_seed=seed)
    mesh = triangulate(poly, 0.2)
    lin = lambda x, y: a * x + b * y + c
    bc = dirichlet_on_boundary(mesh, lin)
    u = solve_direct(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    exact = lin(mesh.vertices[:, 0], mesh.vertices[:, 1])
    assert np.max(np.abs(u - exact)) <= 1e-9

    darcy = ProblemSpec(
        Equation.DARCY,
        bc,
        coeff_a=np.full(mesh.n_vertices, 0.7),
        source_f=np.zeros(mesh.n_vertices),
    )
    u2 = solve_direct(mesh, darcy)
    assert np.max(np.abs(u2 - exact)) <= 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=300))
def test_discrete_maximum_principle(seed):
    poly = random_simple_polygon(3, 12, rng_seed=seed)
    mesh = triangulate(poly, 0.15)
    rng = np.random.default_rng(seed + 1)
    bc = {int(v): float(rng.uniform()) for v in mesh.boundary_vertices()}
    u = solve_direct(mesh, ProblemSpec(Equation.LAPLACE_DIRICHLET, bc))
    lo, hi = min(bc.values()), max(bc.values())
    assert np.all(u >= lo - 1e-9)
    assert np.all(u <= hi + 1e-9)


# --- l2_relative_error ------------------------------------------------------------


def test_error_zero_for_identical():
    u = np.array([1.0, 2.0, 3.0])
    assert l2_relative_error(u, u) == 0.0


def test_error_hand_computed_case():
    assert abs(l2_relative_error(np.array([0.0, 1.0]), np.array([1.0, 0.0])) - np.sqrt(2)) <= 1e-12


def test_error_zero_norm_truth_rejected():
    with pytest.raises(UndefinedMetricError):
        l2_relative_error(np.array([1.0]), np.array([0.0]))


def test_percent_presentation():
    s = percent_string([0.022, 0.028, 0.016])
    assert s == "2.2±0.5"
    import re

    assert re.fullmatch(r"\d+(\.\d+)?±\d+(\.\d+)?", s)


def test_spec_json_roundtrip():
    mesh = grid_mesh(2, 2)
    spec = ProblemSpec(
        Equation.HEAT,
        {int(v): 0.5 for v in mesh.boundary_vertices()},
        alpha=0.9,
        initial_u0=np.linspace(0, 1, mesh.n_vertices),
        n_steps=3,
        dt=0.01,
    )
    back = spec_from_dict(spec.to_dict())
    assert back.equation == spec.equation
    assert back.dirichlet_values == spec.dirichlet_values
    assert np.allclose(back.initial_u0, spec.initial_u0)
    assert back.n_steps == 3 and back.dt == 0.01 and back.alpha == 0.9


def test_cg_failure_carries_residual():
    from schwarzpde.errors import IterativeFailureError

    mesh = grid_mesh(10, 10)
    spec = ProblemSpec(
        Equation.LAPLACE_DIRICHLET, dirichlet_on_boundary(mesh, lambda x, y: x * y)
    )
    sys = assemble(mesh, spec)
    with pytest.raises(IterativeFailureError) as info:
        solve_cg(sys, tol=1e-14, max_iter=2)
    assert info.value.achieved_residual > 0
