"""P1 finite elements: assembly, boundary conditions, solvers, error metric.

Dirichlet conditions are imposed by symmetric elimination so every assembled
system stays symmetric positive definite on its free rows.  Nodal fields
(coefficients, sources, boundary data) are piecewise linear; element
coefficients are the average of the three vertex values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CoercivityError,
    IterativeFailureError,
    NonlinearFailureError,
    SpecificationError,
    UndefinedMetricError,
)
from .geometry import TriMesh

FieldVector = np.ndarray

CG_TOL = 1e-10
PICARD_TOL = 1e-10
PICARD_MAX_ITER = 100


class Equation(enum.Enum):
    LAPLACE_DIRICHLET = "laplace_dirichlet"
    LAPLACE_MIXED = "laplace_mixed"
    DARCY = "darcy"
    HEAT = "heat"
    NONLINEAR_LAPLACE = "nonlinear_laplace"


@dataclass
class ProblemSpec:
    """Equation kind plus all boundary and field data tied to one mesh."""

    equation: Equation
    dirichlet_values: dict[int, float] = field(default_factory=dict)
    neumann_values: dict[tuple[int, int], float] = field(default_factory=dict)
    coeff_a: np.ndarray | None = None
    source_f: np.ndarray | None = None
    alpha: float | None = None
    initial_u0: np.ndarray | None = None
    n_steps: int | None = None
    dt: float | None = None

    def copy(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d: dict = {"equation": self.equation.value}
        d["dirichlet_values"] = {str(k): float(v) for k, v in self.dirichlet_values.items()}
        d["neumann_values"] = [
            {"v": [int(i), int(j)], "g": float(g)} for (i, j), g in self.neumann_values.items()
        ]
        for name in ("coeff_a", "source_f", "initial_u0"):
            val = getattr(self, name)
            if val is not None:
                d[name] = np.asarray(val).tolist()
        for name in ("alpha", "dt"):
            val = getattr(self, name)
            if val is not None:
                d[name] = float(val)
        if self.n_steps is not None:
            d["n_steps"] = int(self.n_steps)
        return d


def spec_from_dict(d: dict) -> ProblemSpec:
    return ProblemSpec(
        equation=Equation(d["equation"]),
        dirichlet_values={int(k): float(v) for k, v in d.get("dirichlet_values", {}).items()},
        neumann_values={
            (int(e["v"][0]), int(e["v"][1])): float(e["g"]) for e in d.get("neumann_values", [])
        },
        coeff_a=np.asarray(d["coeff_a"], dtype=float) if "coeff_a" in d else None,
        source_f=np.asarray(d["source_f"], dtype=float) if "source_f" in d else None,
        alpha=float(d["alpha"]) if "alpha" in d else None,
        initial_u0=np.asarray(d["initial_u0"], dtype=float) if "initial_u0" in d else None,
        n_steps=int(d["n_steps"]) if "n_steps" in d else None,
        dt=float(d["dt"]) if "dt" in d else None,
    )


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_mask: np.ndarray


def _edge_key(i, j) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


def validate_spec(mesh: TriMesh, spec: ProblemSpec) -> None:
    """BC coverage and coercivity checks; raises on inconsistency."""
    n = mesh.n_vertices
    neumann_keys = {_edge_key(i, j) for i, j in spec.neumann_values}
    dirichlet = set(spec.dirichlet_values)
    for v in dirichlet:
        if not (0 <= v < n):
            raise SpecificationError(f"Dirichlet vertex {v} out of range")
    boundary_keys = {_edge_key(i, j) for i, j in mesh.boundary_edges}
    for key in neumann_keys:
        if key not in boundary_keys:
            raise SpecificationError(f"Neumann edge {key} is not a boundary edge")
    for i, j in mesh.boundary_edges:
        key = _edge_key(i, j)
        if key in neumann_keys:
            continue
        if int(i) not in dirichlet or int(j) not in dirichlet:
            raise SpecificationError(
                f"boundary edge {key} has neither a flux nor Dirichlet values on both ends"
            )
    if spec.equation in (
        Equation.LAPLACE_DIRICHLET,
        Equation.DARCY,
        Equation.HEAT,
        Equation.NONLINEAR_LAPLACE,
    ):
        if neumann_keys:
            raise SpecificationError(f"{spec.equation.value} admits no Neumann boundary")
    if spec.equation == Equation.DARCY:
        if spec.coeff_a is None or spec.source_f is None:
            raise SpecificationError("Darcy needs coeff_a and source_f")
        if len(spec.coeff_a) != n or len(spec.source_f) != n:
            raise SpecificationError("coefficient field length mismatch")
        if np.any(np.asarray(spec.coeff_a) <= 0):
            raise CoercivityError("coeff_a must be positive everywhere")
    if spec.equation == Equation.HEAT:
        if spec.alpha is None or spec.initial_u0 is None or spec.n_steps is None or spec.dt is None:
            raise SpecificationError("Heat needs alpha, initial_u0, n_steps, dt")
        if spec.alpha <= 0:
            raise CoercivityError("alpha must be positive")
        if spec.dt <= 0:
            raise CoercivityError("dt must be positive")
        if len(spec.initial_u0) != n:
            raise SpecificationError("initial condition length mismatch")


def _p1_gradients(mesh: TriMesh):
    """Per-triangle areas and basis gradient coefficients (b_i, c_i)/(2A)."""
    p = mesh.vertices[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * (
        (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0])
    )
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=-1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=-1)
    return area, bx, by


def assemble_stiffness(mesh: TriMesh, coeff: np.ndarray | float = 1.0) -> sp.csr_matrix:
    """Stiffness matrix for -div(coeff grad u); coeff per triangle or scalar."""
    area, bx, by = _p1_gradients(mesh)
    if np.isscalar(coeff):
        c = np.full(mesh.n_triangles, float(coeff))
    else:
        c = np.asarray(coeff, dtype=float)
    scale = c / (4.0 * area)
    kloc = (bx[:, :, None] * bx[:, None, :] + by[:, :, None] * by[:, None, :]) * scale[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    a = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    return a.tocsr()


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    area, _, _ = _p1_gradients(mesh)
    mloc = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    vals = mloc[None, :, :] * area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    m = sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    return m.tocsr()


def assemble_load(mesh: TriMesh, f: np.ndarray) -> np.ndarray:
    """Consistent load vector for a piecewise-linear source."""
    area, _, _ = _p1_gradients(mesh)
    fv = np.asarray(f, dtype=float)[mesh.triangles]
    w = area[:, None] / 12.0 * (2.0 * fv + np.roll(fv, 1, axis=1) + np.roll(fv, 2, axis=1))
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), w.ravel())
    return out


def _neumann_rhs(mesh: TriMesh, neumann_values: dict) -> np.ndarray:
    rhs = np.zeros(mesh.n_vertices)
    for (i, j), g in neumann_values.items():
        length = float(np.hypot(*(mesh.vertices[int(i)] - mesh.vertices[int(j)])))
        rhs[int(i)] += 0.5 * g * length
        rhs[int(j)] += 0.5 * g * length
    return rhs


def eliminate_dirichlet(
    matrix: sp.csr_matrix, rhs: np.ndarray, dirichlet: dict[int, float]
) -> SparseSystem:
    """Symmetric elimination: pinned rows/columns zeroed, unit diagonal."""
    n = matrix.shape[0]
    mask = np.zeros(n, dtype=bool)
    u_bc = np.zeros(n)
    for v, val in dirichlet.items():
        mask[v] = True
        u_bc[v] = val
    rhs = rhs - matrix @ u_bc
    rhs[mask] = u_bc[mask]
    free = sp.diags((~mask).astype(float))
    pinned = sp.diags(mask.astype(float))
    a = (free @ matrix @ free + pinned).tocsr()
    a.eliminate_zeros()
    return SparseSystem(matrix=a, rhs=rhs, dirichlet_mask=mask)


def _element_coeff(mesh: TriMesh, nodal: np.ndarray) -> np.ndarray:
    return np.asarray(nodal, dtype=float)[mesh.triangles].mean(axis=1)


def assemble(
    mesh: TriMesh, spec: ProblemSpec, linearization_point: FieldVector | None = None
) -> SparseSystem:
    """Assemble the eliminated sparse system for one (linearized) solve.

    For the nonlinear Laplacian the diffusion coefficient (u^2 + 1) is frozen
    at `linearization_point`, which is required exactly in that case.  For the
    heat equation this builds the implicit step operator M + dt*alpha*K with
    the first-step right-hand side M @ initial_u0.
    """
    validate_spec(mesh, spec)
    if spec.equation == Equation.NONLINEAR_LAPLACE:
        if linearization_point is None:
            raise SpecificationError("nonlinear Laplace assembly needs a linearization point")
    elif linearization_point is not None:
        raise SpecificationError("linearization point only applies to the nonlinear Laplacian")

    rhs = np.zeros(mesh.n_vertices)
    if spec.equation in (Equation.LAPLACE_DIRICHLET, Equation.LAPLACE_MIXED):
        a = assemble_stiffness(mesh)
        rhs += _neumann_rhs(mesh, spec.neumann_values)
    elif spec.equation == Equation.DARCY:
        a = assemble_stiffness(mesh, _element_coeff(mesh, spec.coeff_a))
        rhs += assemble_load(mesh, spec.source_f)
    elif spec.equation == Equation.NONLINEAR_LAPLACE:
        u = np.asarray(linearization_point, dtype=float)
        if len(u) != mesh.n_vertices:
            raise SpecificationError("linearization point length mismatch")
        a = assemble_stiffness(mesh, _element_coeff(mesh, u * u + 1.0))
    elif spec.equation == Equation.HEAT:
        k = assemble_stiffness(mesh)
        m = assemble_mass(mesh)
        a = (m + spec.dt * spec.alpha * k).tocsr()
        rhs += m @ np.asarray(spec.initial_u0, dtype=float)
    else:  # pragma: no cover
        raise SpecificationError(f"unknown equation {spec.equation}")
    return eliminate_dirichlet(a, rhs, spec.dirichlet_values)


def solve_cg(system: SparseSystem, tol: float = CG_TOL, max_iter: int | None = None) -> FieldVector:
    """Diagonally preconditioned conjugate gradients on an SPD system."""
    a, b = system.matrix, system.rhs
    n = len(b)
    if max_iter is None:
        max_iter = 10 * n
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n)
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise SpecificationError("system diagonal must be positive for CG")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * b_norm:
            return x
        ap = a @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recurrence drift check: accept if the true residual meets the target
    true_res = float(np.linalg.norm(b - a @ x))
    if true_res <= tol * b_norm:
        return x
    raise IterativeFailureError(
        f"CG did not reach tol={tol:g} within {max_iter} iterations", true_res / b_norm
    )


def _shifted_linear_solve(
    mesh: TriMesh, spec: ProblemSpec, linearization_point: FieldVector | None = None
) -> FieldVector:
    """Assemble + CG with the Dirichlet mean split off.

    All linear(ized) operators in scope annihilate constants, so solving for
    the deviation from the mean Dirichlet value and adding it back is exact;
    it keeps constant data exact to machine precision instead of CG tolerance.
    """
    if spec.dirichlet_values:
        shift = float(np.mean(list(spec.dirichlet_values.values())))
    else:
        shift = 0.0
    shifted = spec.copy(
        dirichlet_values={v: val - shift for v, val in spec.dirichlet_values.items()}
    )
    u = solve_cg(assemble(mesh, shifted, linearization_point))
    return u + shift


def solve_direct(mesh: TriMesh, spec: ProblemSpec) -> FieldVector:
    """Ground-truth solver: CG for linear problems, Picard for the nonlinear
    Laplacian, backward Euler time stepping for heat (full series returned,
    time-major, including the t=0 level)."""
    validate_spec(mesh, spec)
    if spec.equation in (Equation.LAPLACE_DIRICHLET, Equation.LAPLACE_MIXED, Equation.DARCY):
        return _shifted_linear_solve(mesh, spec)
    if spec.equation == Equation.NONLINEAR_LAPLACE:
        return solve_picard(mesh, spec)
    if spec.equation == Equation.HEAT:
        return solve_heat(mesh, spec)
    raise SpecificationError(f"unknown equation {spec.equation}")


def solve_picard(
    mesh: TriMesh, spec: ProblemSpec, initial_guess: FieldVector | None = None
) -> FieldVector:
    u = np.zeros(mesh.n_vertices) if initial_guess is None else np.asarray(initial_guess, float)
    history: list[float] = []
    for _ in range(PICARD_MAX_ITER):
        u_new = _shifted_linear_solve(mesh, spec, linearization_point=u)
        denom = max(float(np.linalg.norm(u_new)), 1e-300)
        change = float(np.linalg.norm(u_new - u)) / denom
        history.append(change)
        u = u_new
        if change < PICARD_TOL:
            return u
    raise NonlinearFailureError("Picard iteration did not converge", history)


def solve_heat(mesh: TriMesh, spec: ProblemSpec) -> FieldVector:
    """Backward Euler rollout (M + dt*alpha*K) u^{n+1} = M u^n, Dirichlet
    pinned each step.  Level 0 is the raw initial condition."""
    n = mesh.n_vertices
    k = assemble_stiffness(mesh)
    m = assemble_mass(mesh)
    a_full = (m + spec.dt * spec.alpha * k).tocsr()
    mask = np.zeros(n, dtype=bool)
    u_bc = np.zeros(n)
    for v, val in spec.dirichlet_values.items():
        mask[v] = True
        u_bc[v] = val
    free = sp.diags((~mask).astype(float))
    pinned = sp.diags(mask.astype(float))
    a_elim = (free @ a_full @ free + pinned).tocsc()
    lu = spla.splu(a_elim)
    bc_shift = a_full @ u_bc

    levels = [np.asarray(spec.initial_u0, dtype=float).copy()]
    u = levels[0]
    for _ in range(spec.n_steps):
        rhs = m @ u - bc_shift
        rhs[mask] = u_bc[mask]
        u = lu.solve(rhs)
        levels.append(u)
    return np.concatenate(levels)


def heat_series(u: FieldVector, n_vertices: int) -> np.ndarray:
    """Reshape a flattened heat solution to (levels, vertices)."""
    return np.asarray(u).reshape(-1, n_vertices)


def l2_relative_error(u_pred: FieldVector, u_true: FieldVector) -> float:
    u_pred = np.asarray(u_pred, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    if u_pred.shape != u_true.shape:
        raise SpecificationError("prediction and truth have different lengths")
    denom = float(np.linalg.norm(u_true))
    if denom == 0.0:
        raise UndefinedMetricError("reference solution has zero norm")
    return float(np.linalg.norm(u_pred - u_true)) / denom


def percent_string(errors) -> str:
    """Mean +/- std of relative errors as percentages, e.g. '2.2±0.6'."""
    e = 100.0 * np.asarray(list(errors), dtype=float)
    return f"{e.mean():.1f}±{e.std():.1f}"
