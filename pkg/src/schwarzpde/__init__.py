"""Overlapping domain-decomposition PDE toolkit.

Workflow: generate or load a triangulated 2D domain, describe the equation
and boundary data in a ProblemSpec, then either solve directly (P1 FEM) or
iteratively by partitioning into overlapping subdomains whose local solutions
are stitched with a damped additive update.  Local solvers are pluggable:
exact, exact-plus-noise, or a learned surrogate wrapped in symmetry-based
normalization.
"""

from .decomp import (
    AdjGraph,
    Decomposition,
    build_adjacency,
    extend,
    extend_by_zero,
    partition,
    restrict,
)
from .fem import (
    Equation,
    FieldVector,
    ProblemSpec,
    SparseSystem,
    assemble,
    l2_relative_error,
    solve_cg,
    solve_direct,
)
from .geometry import (
    Polygon,
    SubMesh,
    TriMesh,
    extract_submesh,
    random_simple_polygon,
    refine_uniform,
    triangulate,
)
from .schwarz import (
    ExactSolver,
    LocalProblem,
    PerturbedSolver,
    ProvidedInit,
    SniConfig,
    SniState,
    SurrogateSolver,
    ZeroInterior,
    form_local_problem,
    local_solve,
    sni_run,
    sni_run_spacetime,
    sni_step,
)
from .surrogate import SurrogateModel, encode_boundary, evaluate, load_model
from .symmetry import TransformRecord, apply_forward, apply_inverse, fit_normalizer

__version__ = "0.1.0"
