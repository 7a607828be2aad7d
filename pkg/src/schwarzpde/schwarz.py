"""Overlapping-decomposition solver engine.

One iteration solves every subdomain's boundary-value problem against the
shared current iterate (Jacobi style, never sequential), then applies the
damped additive update

    u <- u + tau * sum_k R_k^T (w_k - R_k u),        0 < tau < 1/K

with global Dirichlet values re-pinned afterwards.  Local solvers plug in as
exact FEM, exact-plus-bounded-noise, or a learned surrogate wrapped in the
normalization transforms.

Per subdomain the eliminated local matrix never changes across iterations
(only boundary data does), so linear equations are factored once and reused;
this matches the exact solver to machine precision at a fraction of the cost.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import surrogate as surrogate_mod
from .decomp import (
    Decomposition,
    boundary_component_diagnostic,
    build_adjacency,
    extend,
    partition,
)
from .errors import (
    ConfigurationError,
    LocalSolveError,
    SpecificationError,
    UnsupportedBySurrogateError,
)
from .fem import (
    Equation,
    FieldVector,
    ProblemSpec,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    solve_direct,
    solve_picard,
    validate_spec,
)
from .geometry import SubMesh, TriMesh, extract_submesh
from .symmetry import apply_forward, apply_inverse, fit_normalizer


# --- local solver and initialization variants --------------------------------


@dataclass(frozen=True)
class ExactSolver:
    pass


@dataclass(frozen=True)
class PerturbedSolver:
    c: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.c < 0:
            raise ConfigurationError("perturbation level c must be nonnegative")


@dataclass(frozen=True)
class SurrogateSolver:
    weights_path: str


@dataclass(frozen=True)
class ZeroInterior:
    pass


@dataclass(frozen=True)
class ProvidedInit:
    u: np.ndarray

    def vector(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float).ravel()


LocalSolver = ExactSolver | PerturbedSolver | SurrogateSolver

DEFAULT_TOL_EXACT = 1e-8
DEFAULT_TOL_NOISY = 1e-4


@dataclass
class SniConfig:
    """Run parameters.  The step size must satisfy 0 < tau < 1/K."""

    k: int
    depth: int
    tau: float
    outer_tol: float | None = None
    max_outer: int = 1000
    local_solver: LocalSolver = ExactSolver()
    init: ZeroInterior | ProvidedInit = ZeroInterior()
    partition_seed: int = 0
    n_threads: int = 1
    measure_local_error: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("K must be at least 1")
        if self.depth < 0:
            raise ConfigurationError("extension depth must be nonnegative")
        if not (0.0 < self.tau < 1.0 / self.k):
            raise ConfigurationError(
                f"step size tau={self.tau} violates 0 < tau < 1/K = {1.0 / self.k}"
            )
        if self.outer_tol is None:
            self.outer_tol = (
                DEFAULT_TOL_EXACT
                if isinstance(self.local_solver, ExactSolver)
                else DEFAULT_TOL_NOISY
            )
        if self.outer_tol <= 0:
            raise ConfigurationError("outer tolerance must be positive")
        if self.max_outer < 1:
            raise ConfigurationError("max_outer must be at least 1")
        if self.n_threads < 1:
            raise ConfigurationError("n_threads must be at least 1")


@dataclass
class SniState:
    """Iterate plus convergence diagnostics."""

    u: FieldVector
    iteration: int = 0
    update_norms: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def rho_hat(self) -> float | None:
        """Geometric mean of the last five update-norm ratios."""
        if len(self.update_norms) < 6:
            return None
        tail = self.update_norms[-6:]
        if any(x <= 0.0 for x in tail[:-1]):
            return 0.0
        return float((tail[-1] / tail[0]) ** 0.2)


@dataclass
class LocalProblem:
    """One subdomain's boundary-value problem at a given iteration."""

    k: int
    iteration: int
    submesh: SubMesh
    spec: ProblemSpec


def form_local_problem(
    k: int,
    state: SniState,
    global_spec: ProblemSpec,
    decomposition: Decomposition,
    mesh: TriMesh,
    submesh: SubMesh | None = None,
) -> LocalProblem:
    """Restrict the global problem to subdomain k with the current interface data.

    Global-Dirichlet local vertices take the prescribed data, flux edges keep
    their flux, and artificial-boundary vertices take the iterate's values.
    """
    if global_spec.equation == Equation.HEAT:
        raise SpecificationError("heat local problems are formed by the space-time runner")
    if submesh is None:
        submesh = extract_submesh(mesh, decomposition.parts[k])
    gids = submesh.global_ids
    u = np.asarray(state.u)
    if len(u) != mesh.n_vertices:
        raise SpecificationError("iterate length does not match the mesh")

    dirichlet: dict[int, float] = {}
    for v in submesh.global_dirichlet_vertices:
        g = int(gids[v])
        try:
            dirichlet[int(v)] = float(global_spec.dirichlet_values[g])
        except KeyError as exc:
            raise SpecificationError(
                f"subdomain {k}: global Dirichlet vertex {g} has no value"
            ) from exc
    for v in submesh.artificial_boundary:
        dirichlet[int(v)] = float(u[int(gids[v])])

    neumann: dict[tuple[int, int], float] = {}
    for e_idx in submesh.neumann_edge_indices:
        a, b = submesh.mesh.boundary_edges[int(e_idx)]
        gkey = (min(int(gids[a]), int(gids[b])), max(int(gids[a]), int(gids[b])))
        try:
            g = global_spec.neumann_values[gkey]
        except KeyError as exc:
            raise SpecificationError(
                f"subdomain {k}: flux edge {gkey} has no value"
            ) from exc
        neumann[(int(a), int(b))] = float(g)

    local_spec = global_spec.copy(
        dirichlet_values=dirichlet,
        neumann_values=neumann,
        coeff_a=None if global_spec.coeff_a is None else np.asarray(global_spec.coeff_a)[gids],
        source_f=None if global_spec.source_f is None else np.asarray(global_spec.source_f)[gids],
        initial_u0=None,
    )
    # every local boundary vertex must now carry exactly one condition
    covered = set(dirichlet)
    flux_endpoints = set()
    for a, b in neumann:
        flux_endpoints.update((a, b))
    for v in submesh.mesh.boundary_vertices():
        if int(v) not in covered and int(v) not in flux_endpoints:
            raise SpecificationError(f"subdomain {k}: local boundary vertex {v} uncovered")
    return LocalProblem(k=k, iteration=state.iteration, submesh=submesh, spec=local_spec)


def local_solve(
    problem: LocalProblem,
    solver: LocalSolver,
    ref_scale: float | None = None,
    model: surrogate_mod.SurrogateModel | None = None,
) -> FieldVector:
    """Solve one local problem with the chosen solver variant."""
    if isinstance(solver, ExactSolver):
        return solve_direct(problem.submesh.mesh, problem.spec)
    if isinstance(solver, PerturbedSolver):
        w = solve_direct(problem.submesh.mesh, problem.spec)
        w, _ = _perturb(w, problem, solver, ref_scale)
        return w
    if isinstance(solver, SurrogateSolver):
        if model is None:
            model = surrogate_mod.load_model(solver.weights_path)
        w, _ = _surrogate_solve(problem, model)
        return w
    raise ConfigurationError(f"unknown local solver {solver!r}")


def _perturb(
    w: FieldVector, problem: LocalProblem, solver: PerturbedSolver, ref_scale: float | None
) -> tuple[FieldVector, float]:
    """Add a seeded noise vector of norm c * min(|w|, ref); zero on the
    global-Dirichlet part of the local boundary.  Returns (vector, norm)."""
    if solver.c == 0.0:
        return w, 0.0
    rng = np.random.default_rng([abs(int(solver.rng_seed)), problem.k, problem.iteration])
    z = rng.standard_normal(len(w))
    z[problem.submesh.global_dirichlet_vertices] = 0.0
    zn = float(np.linalg.norm(z))
    if zn == 0.0:
        return w, 0.0
    w_norm = float(np.linalg.norm(w))
    cap = w_norm if ref_scale is None else min(w_norm, ref_scale)
    injected = solver.c * cap
    return w + (injected / zn) * z, injected


def _surrogate_solve(
    problem: LocalProblem, model: surrogate_mod.SurrogateModel
) -> tuple[FieldVector, "TransformRecord"]:
    if problem.spec.equation != Equation.LAPLACE_DIRICHLET:
        raise UnsupportedBySurrogateError(
            f"surrogate supports the plain Laplacian only, not {problem.spec.equation.value}"
        )
    record = fit_normalizer(problem.submesh, problem.spec)
    tsub, tspec = apply_forward(record, problem.submesh, problem.spec)
    encoded = surrogate_mod.encode_boundary(
        LocalProblem(problem.k, problem.iteration, tsub, tspec), model.m
    )
    values = surrogate_mod.evaluate(model, encoded, tsub.mesh.vertices)
    w = apply_inverse(record, values)
    # boundary data is known exactly; keep the prediction to the interior
    for v, val in problem.spec.dirichlet_values.items():
        w[v] = val
    return w, record


# --- engine -------------------------------------------------------------------


class SniEngine:
    """Caches per-subdomain systems and drives the iteration."""

    def __init__(
        self,
        config: SniConfig,
        mesh: TriMesh,
        global_spec: ProblemSpec,
        decomposition: Decomposition | None = None,
    ):
        validate_spec(mesh, global_spec)
        self.config = config
        self.mesh = mesh
        self.spec = global_spec
        t0 = time.perf_counter()
        if decomposition is None:
            graph = build_adjacency(mesh)
            cores = partition(graph, config.k, config.partition_seed)
            decomposition = extend(graph, cores, config.depth)
        elif decomposition.k != config.k:
            raise ConfigurationError(
                f"decomposition has {decomposition.k} parts, config expects {config.k}"
            )
        self.decomposition = decomposition
        if isinstance(config.local_solver, SurrogateSolver):
            # only surrogate-backed runs care about boundary-arc counts
            boundary_component_diagnostic(mesh, decomposition)
        self.submeshes = [
            extract_submesh(mesh, part) for part in decomposition.parts
        ]
        self._build_caches()
        self.timings = {"partition": time.perf_counter() - t0, "local": 0.0, "update": 0.0}
        self.injected_norms: list[float] = []
        self.local_errors: list[float] = []
        self.normalizers: dict[int, dict] = {}

        dv = global_spec.dirichlet_values
        self.global_dirichlet_idx = np.array(sorted(dv), dtype=np.int64)
        self.global_dirichlet_vals = np.array([dv[v] for v in sorted(dv)], dtype=float)
        if len(dv):
            rng_span = float(self.global_dirichlet_vals.max() - self.global_dirichlet_vals.min())
            self.ref_scale = rng_span if rng_span > 0 else max(
                1.0, float(np.abs(self.global_dirichlet_vals).max())
            )
        else:
            self.ref_scale = 1.0

        self.model = None
        if isinstance(config.local_solver, SurrogateSolver):
            self.model = surrogate_mod.load_model(config.local_solver.weights_path)

    def _build_caches(self):
        """Assemble and factor each subdomain's eliminated system once."""
        self._cache = []
        eq = self.spec.equation
        for sub in self.submeshes:
            gids = sub.global_ids
            lmesh = sub.mesh
            n_loc = lmesh.n_vertices
            d_idx = np.unique(
                np.concatenate([sub.global_dirichlet_vertices, sub.artificial_boundary])
            ).astype(np.int64)
            entry = {
                "d_idx": d_idx,
                "gd_local": sub.global_dirichlet_vertices,
                "gd_vals": np.array(
                    [self.spec.dirichlet_values[int(gids[v])] for v in sub.global_dirichlet_vertices],
                    dtype=float,
                ),
                "art_local": sub.artificial_boundary,
                "art_global": gids[sub.artificial_boundary],
                "warm": None,
            }
            if eq in (Equation.LAPLACE_DIRICHLET, Equation.LAPLACE_MIXED, Equation.DARCY):
                if eq == Equation.DARCY:
                    coeff = np.asarray(self.spec.coeff_a)[gids][lmesh.triangles].mean(axis=1)
                    a_full = assemble_stiffness(lmesh, coeff)
                    rhs_static = assemble_load(lmesh, np.asarray(self.spec.source_f)[gids])
                else:
                    a_full = assemble_stiffness(lmesh)
                    rhs_static = np.zeros(n_loc)
                    for e_idx in sub.neumann_edge_indices:
                        a, b = lmesh.boundary_edges[int(e_idx)]
                        gkey = (
                            min(int(gids[a]), int(gids[b])),
                            max(int(gids[a]), int(gids[b])),
                        )
                        g = self.spec.neumann_values[gkey]
                        length = float(np.hypot(*(lmesh.vertices[int(a)] - lmesh.vertices[int(b)])))
                        rhs_static[int(a)] += 0.5 * g * length
                        rhs_static[int(b)] += 0.5 * g * length
                mask = np.zeros(n_loc, dtype=bool)
                mask[d_idx] = True
                free = sp.diags((~mask).astype(float))
                pinned = sp.diags(mask.astype(float))
                entry["a_full"] = a_full.tocsr()
                entry["rhs_static"] = rhs_static
                entry["lu"] = spla.splu((free @ a_full @ free + pinned).tocsc())
            self._cache.append(entry)

    def _bc_vector(self, k: int, u: np.ndarray) -> np.ndarray:
        c = self._cache[k]
        n_loc = self.submeshes[k].mesh.n_vertices
        u_bc = np.zeros(n_loc)
        u_bc[c["gd_local"]] = c["gd_vals"]
        u_bc[c["art_local"]] = u[c["art_global"]]
        return u_bc

    def _exact_local(self, k: int, u: np.ndarray) -> FieldVector:
        """Cached equivalent of solving the local problem exactly."""
        c = self._cache[k]
        eq = self.spec.equation
        if "lu" in c:
            u_bc = self._bc_vector(k, u)
            rhs = c["rhs_static"] - c["a_full"] @ u_bc
            rhs[c["d_idx"]] = u_bc[c["d_idx"]]
            return c["lu"].solve(rhs)
        if eq == Equation.NONLINEAR_LAPLACE:
            sub = self.submeshes[k]
            state = SniState(u=u)
            lp = form_local_problem(k, state, self.spec, self.decomposition, self.mesh, sub)
            guess = c["warm"] if c["warm"] is not None else u[sub.global_ids]
            w = solve_picard(sub.mesh, lp.spec, initial_guess=guess)
            c["warm"] = w
            return w
        raise SpecificationError(f"no cached local solver for {eq}")

    def _local_value(self, k: int, u: np.ndarray, iteration: int) -> FieldVector:
        solver = self.config.local_solver
        if isinstance(solver, (ExactSolver, PerturbedSolver)):
            w = self._exact_local(k, u)
            if isinstance(solver, PerturbedSolver):
                sub = self.submeshes[k]
                lp = LocalProblem(k, iteration, sub, self.spec)
                w_noisy, injected = _perturb(w, lp, solver, self.ref_scale)
                self.injected_norms.append(injected)
                if self.config.measure_local_error:
                    self.local_errors.append(float(np.linalg.norm(w_noisy - w)))
                return w_noisy
            return w
        if isinstance(solver, SurrogateSolver):
            sub = self.submeshes[k]
            state = SniState(u=u, iteration=iteration)
            lp = form_local_problem(k, state, self.spec, self.decomposition, self.mesh, sub)
            w, record = _surrogate_solve(lp, self.model)
            self.normalizers[k] = record.to_dict()
            if self.config.measure_local_error:
                w_exact = self._exact_local(k, u)
                self.local_errors.append(float(np.linalg.norm(w - w_exact)))
            return w
        raise ConfigurationError(f"unknown local solver {solver!r}")

    def initial_state(self) -> SniState:
        n = self.mesh.n_vertices
        init = self.config.init
        if isinstance(init, ZeroInterior):
            u = np.zeros(n)
        else:
            u = init.vector().copy()
            if len(u) != n:
                raise ConfigurationError("provided initial iterate has wrong length")
        u[self.global_dirichlet_idx] = self.global_dirichlet_vals
        return SniState(u=u)

    def step(self, state: SniState) -> SniState:
        """One damped additive update; all K solves read the same iterate."""
        u = state.u
        ks = range(self.decomposition.k)
        t0 = time.perf_counter()

        def solve_one(k: int) -> FieldVector:
            try:
                return self._local_value(k, u, state.iteration)
            except Exception as exc:
                raise LocalSolveError(
                    f"subdomain {k} failed at iteration {state.iteration}: {exc}"
                ) from exc

        if self.config.n_threads > 1:
            with ThreadPoolExecutor(max_workers=self.config.n_threads) as pool:
                results = list(pool.map(solve_one, ks))
        else:
            results = [solve_one(k) for k in ks]
        t1 = time.perf_counter()

        delta = np.zeros(len(u))
        for k in ks:  # fixed ascending order: bitwise-reproducible accumulation
            ids = self.submeshes[k].global_ids
            np.add.at(delta, ids, results[k] - u[ids])
        u_new = u + self.config.tau * delta
        u_new[self.global_dirichlet_idx] = self.global_dirichlet_vals
        norm = float(np.linalg.norm(u_new - u))
        self.timings["local"] += t1 - t0
        self.timings["update"] += time.perf_counter() - t1

        rel = norm / max(float(np.linalg.norm(u_new)), 1e-12)
        return SniState(
            u=u_new,
            iteration=state.iteration + 1,
            update_norms=state.update_norms + [norm],
            converged=rel < self.config.outer_tol,
        )

    def run(
        self,
        oracle: FieldVector | None = None,
        stop_error: float | None = None,
    ) -> tuple[FieldVector, dict]:
        state = self.initial_state()
        error_history: list[float] = []
        oracle_norm = float(np.linalg.norm(oracle)) if oracle is not None else None
        for _ in range(self.config.max_outer):
            state = self.step(state)
            if oracle is not None:
                err = float(np.linalg.norm(state.u - oracle)) / max(oracle_norm, 1e-300)
                error_history.append(err)
                if stop_error is not None and err <= stop_error:
                    break
            if state.converged:
                break
        diag = {
            "update_norms": list(state.update_norms),
            "rho_hat": state.rho_hat,
            "overlap_factor": int(self.decomposition.overlap_factor),
            "converged": bool(state.converged),
            "iterations": int(state.iteration),
            "timings": dict(self.timings),
        }
        if error_history:
            diag["error_history"] = error_history
        if self.injected_norms:
            diag["c_abs_max"] = float(max(self.injected_norms))
        if self.local_errors:
            diag["local_error_max"] = float(max(self.local_errors))
            diag["local_error_mean"] = float(np.mean(self.local_errors))
        if self.normalizers:
            diag["normalizers"] = {str(k): v for k, v in sorted(self.normalizers.items())}
        return state.u, diag


def sni_step(
    state: SniState,
    config: SniConfig,
    decomposition: Decomposition,
    global_spec: ProblemSpec,
    mesh: TriMesh,
    engine: SniEngine | None = None,
) -> SniState:
    """One iteration; builds a throwaway engine unless one is supplied."""
    if engine is None:
        engine = SniEngine(config, mesh, global_spec, decomposition)
    return engine.step(state)


def sni_run(
    config: SniConfig,
    mesh: TriMesh,
    global_spec: ProblemSpec,
    decomposition: Decomposition | None = None,
    oracle: FieldVector | None = None,
    stop_error: float | None = None,
) -> tuple[FieldVector, dict]:
    """Decompose, iterate to the update tolerance, and report diagnostics.

    Never raises on slow convergence: the result carries converged=False when
    the iteration cap is hit."""
    engine = SniEngine(config, mesh, global_spec, decomposition)
    return engine.run(oracle=oracle, stop_error=stop_error)


# --- space-time runner ----------------------------------------------------------


def _temporal_windows(n_steps: int, k_temporal: int, delta_t: int) -> list[tuple[int, int]]:
    if n_steps % k_temporal != 0:
        raise ConfigurationError(
            f"{k_temporal} windows do not divide {n_steps} steps evenly"
        )
    chunk = n_steps // k_temporal
    out = []
    for j in range(1, k_temporal + 1):
        lo = max(0, (j - 1) * chunk - delta_t)
        hi = min(n_steps, j * chunk + delta_t)
        out.append((lo, hi))
    return out


def sni_run_spacetime(
    config: SniConfig,
    mesh: TriMesh,
    heat_spec: ProblemSpec,
    k_spatial: int,
    k_temporal: int,
    delta_t_overlap: int,
    oracle: FieldVector | None = None,
) -> tuple[FieldVector, dict]:
    """Additive update over (vertex, step) unknowns for the heat equation.

    Space-time parts are (spatial part) x (step window widened by the
    temporal overlap); each local solve is a backward-Euler rollout seeded
    from the iterate at the window's first step, with interface values taken
    from the iterate at each step.  Step 0 stays pinned to the initial
    condition.
    """
    if heat_spec.equation != Equation.HEAT:
        raise SpecificationError("space-time runner only handles the heat equation")
    validate_spec(mesh, heat_spec)
    if config.k != k_spatial * k_temporal:
        raise ConfigurationError(
            f"config.k={config.k} must equal k_spatial*k_temporal={k_spatial * k_temporal}"
        )
    if isinstance(config.local_solver, SurrogateSolver):
        raise UnsupportedBySurrogateError("space-time local problems are not surrogate-backed")

    t0 = time.perf_counter()
    graph = build_adjacency(mesh)
    cores = partition(graph, k_spatial, config.partition_seed)
    decomposition = extend(graph, cores, config.depth)
    submeshes = [extract_submesh(mesh, p) for p in decomposition.parts]
    windows = _temporal_windows(heat_spec.n_steps, k_temporal, delta_t_overlap)

    n = mesh.n_vertices
    n_levels = heat_spec.n_steps + 1
    dv = heat_spec.dirichlet_values
    gd_idx = np.array(sorted(dv), dtype=np.int64)
    gd_vals = np.array([dv[v] for v in sorted(dv)], dtype=float)
    u0 = np.asarray(heat_spec.initial_u0, dtype=float)

    caches = []
    for sub in submeshes:
        lmesh = sub.mesh
        gids = sub.global_ids
        d_idx = np.unique(
            np.concatenate([sub.global_dirichlet_vertices, sub.artificial_boundary])
        ).astype(np.int64)
        m_loc = assemble_mass(lmesh)
        a_full = (m_loc + heat_spec.dt * heat_spec.alpha * assemble_stiffness(lmesh)).tocsr()
        mask = np.zeros(lmesh.n_vertices, dtype=bool)
        mask[d_idx] = True
        free = sp.diags((~mask).astype(float))
        pinned = sp.diags(mask.astype(float))
        caches.append(
            {
                "gids": gids,
                "d_idx": d_idx,
                "gd_local": sub.global_dirichlet_vertices,
                "gd_vals": np.array(
                    [dv[int(gids[v])] for v in sub.global_dirichlet_vertices], dtype=float
                ),
                "art_local": sub.artificial_boundary,
                "art_global": gids[sub.artificial_boundary],
                "m": m_loc,
                "a_full": a_full,
                "lu": spla.splu((free @ a_full @ free + pinned).tocsc()),
            }
        )
    timings = {"partition": time.perf_counter() - t0, "local": 0.0, "update": 0.0}

    # iterate layout: time-major (level, vertex)
    u = np.zeros((n_levels, n))
    u[0] = u0
    if isinstance(config.init, ProvidedInit):
        provided = config.init.vector().reshape(n_levels, n)
        u[1:] = provided[1:]
    u[1:, gd_idx] = gd_vals
    u[0] = u0

    t_overlap = _spacetime_overlap(decomposition, windows, n, n_levels)

    update_norms: list[float] = []
    converged = False
    iteration = 0
    injected: list[float] = []
    error_history: list[float] = []
    rng_span = float(gd_vals.max() - gd_vals.min()) if len(gd_vals) else 1.0
    ref_scale = rng_span if rng_span > 0 else 1.0
    oracle_lv = None if oracle is None else np.asarray(oracle).reshape(n_levels, n)

    for iteration in range(1, config.max_outer + 1):
        t1 = time.perf_counter()
        delta = np.zeros_like(u)
        for part_idx, (cache, sub) in enumerate(zip(caches, submeshes)):
            gids = cache["gids"]
            for w_idx, (s_lo, s_hi) in enumerate(windows):
                w_prev = u[s_lo, gids]
                rollout = []
                for s in range(s_lo + 1, s_hi + 1):
                    u_bc = np.zeros(len(gids))
                    u_bc[cache["gd_local"]] = cache["gd_vals"]
                    u_bc[cache["art_local"]] = u[s, cache["art_global"]]
                    rhs = cache["m"] @ w_prev - cache["a_full"] @ u_bc
                    rhs[cache["d_idx"]] = u_bc[cache["d_idx"]]
                    w_s = cache["lu"].solve(rhs)
                    rollout.append(w_s)
                    w_prev = w_s
                if isinstance(config.local_solver, PerturbedSolver) and config.local_solver.c > 0:
                    rollout = _perturb_window(
                        rollout, config.local_solver, part_idx, w_idx, iteration,
                        cache["gd_local"], ref_scale, injected,
                    )
                for s, w_s in zip(range(s_lo + 1, s_hi + 1), rollout):
                    delta[s, gids] += w_s - u[s, gids]
        t2 = time.perf_counter()
        u_new = u + config.tau * delta
        u_new[0] = u0
        u_new[1:, gd_idx] = gd_vals
        norm = float(np.linalg.norm(u_new - u))
        update_norms.append(norm)
        timings["local"] += t2 - t1
        timings["update"] += time.perf_counter() - t2
        rel = norm / max(float(np.linalg.norm(u_new)), 1e-12)
        u = u_new
        if oracle_lv is not None:
            error_history.append(
                float(np.linalg.norm(u - oracle_lv)) / max(float(np.linalg.norm(oracle_lv)), 1e-300)
            )
        if rel < config.outer_tol:
            converged = True
            break

    state = SniState(u=u.ravel(), iteration=iteration, update_norms=update_norms,
                     converged=converged)
    diag = {
        "update_norms": update_norms,
        "rho_hat": state.rho_hat,
        "overlap_factor": int(t_overlap),
        "spatial_overlap_factor": int(decomposition.overlap_factor),
        "converged": bool(converged),
        "iterations": int(iteration),
        "timings": timings,
        "windows": windows,
    }
    if injected:
        diag["c_abs_max"] = float(max(injected))
    if error_history:
        diag["error_history"] = error_history
    return u.ravel(), diag


def _perturb_window(rollout, solver, part_idx, w_idx, iteration, gd_local, ref_scale, injected):
    stacked = np.concatenate(rollout)
    rng = np.random.default_rng(
        [abs(int(solver.rng_seed)), part_idx, w_idx, iteration]
    )
    z = rng.standard_normal(len(stacked))
    z = z.reshape(len(rollout), -1)
    z[:, gd_local] = 0.0
    z = z.ravel()
    zn = float(np.linalg.norm(z))
    if zn == 0.0:
        return rollout
    cap = min(float(np.linalg.norm(stacked)), ref_scale * np.sqrt(len(rollout)))
    amount = solver.c * cap
    injected.append(amount)
    stacked = stacked + (amount / zn) * z
    size = len(rollout[0])
    return [stacked[i * size : (i + 1) * size] for i in range(len(rollout))]


def _spacetime_overlap(decomposition, windows, n, n_levels) -> int:
    spatial = np.zeros(n, dtype=int)
    for p in decomposition.parts:
        spatial[p] += 1
    temporal = np.zeros(n_levels, dtype=int)
    for lo, hi in windows:
        temporal[lo + 1 : hi + 1] += 1
    t_time = int(temporal[1:].max()) if n_levels > 1 else 1
    return int(spatial.max()) * t_time
