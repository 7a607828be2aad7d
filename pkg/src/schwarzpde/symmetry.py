"""Invertible problem transforms used to normalize local solves.

Each equation admits a specific set of transforms; applying one maps a
boundary-value problem to an equivalent one whose solution is recovered by
the inverse value map.  Coordinates compose as shift -> rotate -> scale,
values as shift -> scale.

Admitted transforms and their data rules:

  spatial shift / rotation   all equations, data carried along unchanged
  spatial scale s            plain Laplacian: nothing; mixed: u,u_D x s, g fixed;
                             diffusion with source: u,u_D x s^2, a/f fixed;
                             heat: alpha x s^2, values fixed;
                             nonlinear Laplacian: nothing
  value shift t              u,u_D (+u_0) + t; flux g fixed; not for the
                             nonlinear Laplacian
  value scale s_v            u,u_D (+u_0) x s_v; mixed: g x s_v; diffusion
                             with source: f x s_v; not for the nonlinear
                             Laplacian
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MeshingError, UnsupportedTransformError
from .fem import Equation, ProblemSpec
from .geometry import SubMesh, TriMesh

DEFAULT_TRAINING_BOX = (-0.5, -0.5, 0.5, 0.5)
DEFAULT_TRAINING_RANGE = (0.0, 1.0)

# Equations whose solution values may be shifted/scaled.
_VALUE_AFFINE = {
    Equation.LAPLACE_DIRICHLET,
    Equation.LAPLACE_MIXED,
    Equation.DARCY,
    Equation.HEAT,
}


@dataclass
class TransformRecord:
    """Parameters of one invertible normalization transform."""

    equation: Equation
    spatial_shift: tuple[float, float] = (0.0, 0.0)
    spatial_rotation: float = 0.0
    spatial_scale: float = 1.0
    value_shift: float = 0.0
    value_scale: float = 1.0

    def __post_init__(self):
        if self.spatial_scale <= 0:
            raise ValueError("spatial scale must be positive")
        if self.value_scale == 0:
            raise ValueError("value scale must be nonzero")

    @property
    def is_identity(self) -> bool:
        return (
            self.spatial_shift == (0.0, 0.0)
            and self.spatial_rotation == 0.0
            and self.spatial_scale == 1.0
            and self.value_shift == 0.0
            and self.value_scale == 1.0
        )

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        """shift -> rotate -> scale applied to coordinates."""
        out = np.asarray(pts, dtype=float) + np.asarray(self.spatial_shift)
        if self.spatial_rotation != 0.0:
            c, s = np.cos(self.spatial_rotation), np.sin(self.spatial_rotation)
            out = out @ np.array([[c, s], [-s, c]])
        return self.spatial_scale * out

    def to_dict(self) -> dict:
        return {
            "equation": self.equation.value,
            "spatial_shift": [float(x) for x in self.spatial_shift],
            "spatial_rotation": float(self.spatial_rotation),
            "spatial_scale": float(self.spatial_scale),
            "value_shift": float(self.value_shift),
            "value_scale": float(self.value_scale),
        }


def record_from_dict(d: dict) -> TransformRecord:
    return TransformRecord(
        equation=Equation(d["equation"]),
        spatial_shift=(float(d["spatial_shift"][0]), float(d["spatial_shift"][1])),
        spatial_rotation=float(d["spatial_rotation"]),
        spatial_scale=float(d["spatial_scale"]),
        value_shift=float(d["value_shift"]),
        value_scale=float(d["value_scale"]),
    )


def solution_spatial_factor(equation: Equation, s: float) -> float:
    """Multiplier the solution picks up under spatial scaling by s."""
    if equation == Equation.LAPLACE_MIXED:
        return s
    if equation == Equation.DARCY:
        return s * s
    return 1.0


def _check_admitted(record: TransformRecord) -> None:
    if record.equation == Equation.NONLINEAR_LAPLACE and (
        record.value_shift != 0.0 or record.value_scale != 1.0
    ):
        raise UnsupportedTransformError(
            "the nonlinear Laplacian admits no value shift or scale"
        )


def apply_forward(
    record: TransformRecord, submesh: SubMesh, local_spec: ProblemSpec
) -> tuple[SubMesh, ProblemSpec]:
    """Transform a local problem; returns new (submesh, spec), inputs untouched."""
    if record.equation != local_spec.equation:
        raise UnsupportedTransformError(
            f"record is for {record.equation.value}, problem is {local_spec.equation.value}"
        )
    _check_admitted(record)

    mesh = submesh.mesh
    new_mesh = TriMesh(
        record.map_points(mesh.vertices),
        mesh.triangles,
        mesh.boundary_edges,
        list(mesh.boundary_tags),
    )
    new_sub = SubMesh(
        mesh=new_mesh,
        global_ids=submesh.global_ids,
        artificial_boundary=submesh.artificial_boundary,
        global_dirichlet_vertices=submesh.global_dirichlet_vertices,
        neumann_edge_indices=submesh.neumann_edge_indices,
    )

    s = record.spatial_scale
    sigma = solution_spatial_factor(record.equation, s)
    t_v, s_v = record.value_shift, record.value_scale

    def value_map(v: float) -> float:
        return s_v * (sigma * v + t_v)

    dirichlet = {k: value_map(v) for k, v in local_spec.dirichlet_values.items()}
    neumann = dict(local_spec.neumann_values)
    alpha = local_spec.alpha
    source = local_spec.source_f
    u0 = local_spec.initial_u0

    if record.equation == Equation.LAPLACE_MIXED:
        # flux is scale-free spatially (u picks up s); value scale applies
        neumann = {k: s_v * g for k, g in neumann.items()}
    if record.equation == Equation.DARCY and source is not None:
        source = s_v * np.asarray(source, dtype=float)
    if record.equation == Equation.HEAT:
        alpha = None if alpha is None else s * s * alpha
        if u0 is not None:
            u0 = s_v * (np.asarray(u0, dtype=float) + t_v)

    new_spec = local_spec.copy(
        dirichlet_values=dirichlet,
        neumann_values=neumann,
        alpha=alpha,
        source_f=source,
        initial_u0=u0,
    )
    return new_sub, new_spec


def apply_inverse(record: TransformRecord, w: np.ndarray) -> np.ndarray:
    """Undo the solution-value transform of a forward-mapped solve."""
    _check_admitted(record)
    sigma = solution_spatial_factor(record.equation, record.spatial_scale)
    w = np.asarray(w, dtype=float)
    return (w / record.value_scale - record.value_shift) / sigma


def apply_solution_forward(record: TransformRecord, u: np.ndarray) -> np.ndarray:
    """Map a solution the way the transformed problem's solution relates to
    the original one (exact inverse of apply_inverse)."""
    _check_admitted(record)
    sigma = solution_spatial_factor(record.equation, record.spatial_scale)
    return record.value_scale * (sigma * np.asarray(u, dtype=float) + record.value_shift)


def fit_normalizer(
    submesh: SubMesh,
    local_spec: ProblemSpec,
    training_box: tuple[float, float, float, float] = DEFAULT_TRAINING_BOX,
    training_range: tuple[float, float] = DEFAULT_TRAINING_RANGE,
) -> TransformRecord:
    """Fit the shift+scale transform taking a local problem into the training
    window: bounding box into `training_box`, Dirichlet data into
    `training_range` (when the equation admits value transforms).

    Inputs already inside the window get identity components.  The nonlinear
    Laplacian admits neither value transforms nor (by normalization policy)
    spatial scaling, so only a spatial shift is fitted there; out-of-range
    values pass through with a warning.
    """
    pts = submesh.mesh.vertices
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diam = float(np.max(hi - lo))
    if diam <= 0:
        raise MeshingError("submesh has zero diameter")
    bxmin, bymin, bxmax, bymax = training_box
    eq = local_spec.equation

    spatial_scale = 1.0
    shift = (0.0, 0.0)
    inside_box = (
        lo[0] >= bxmin - 1e-12
        and lo[1] >= bymin - 1e-12
        and hi[0] <= bxmax + 1e-12
        and hi[1] <= bymax + 1e-12
    )
    if not inside_box:
        center = 0.5 * (lo + hi)
        box_center = np.array([0.5 * (bxmin + bxmax), 0.5 * (bymin + bymax)])
        if eq == Equation.NONLINEAR_LAPLACE:
            shift = tuple(box_center - center)
        else:
            spatial_scale = min((bxmax - bxmin) / (hi[0] - lo[0] + 1e-300),
                                (bymax - bymin) / (hi[1] - lo[1] + 1e-300))
            shift = tuple(box_center / spatial_scale - center)

    value_shift, value_scale = 0.0, 1.0
    data = np.array(sorted(local_spec.dirichlet_values.values()), dtype=float)
    if len(data):
        sigma = solution_spatial_factor(eq, spatial_scale)
        dlo, dhi = sigma * float(data[0]), sigma * float(data[-1])
        rlo, rhi = training_range
        in_range = dlo >= rlo - 1e-12 and dhi <= rhi + 1e-12
        if not in_range:
            if eq not in _VALUE_AFFINE:
                warnings.warn(
                    "Dirichlet data outside the training range for an equation "
                    "without value symmetries; passing values through",
                    stacklevel=2,
                )
            elif dhi - dlo < 1e-12:
                # constant data: shift only, scale stays 1
                value_shift = 0.5 * (rlo + rhi) - dlo
            else:
                value_scale = (rhi - rlo) / (dhi - dlo)
                value_shift = rlo / value_scale - dlo

    return TransformRecord(
        equation=eq,
        spatial_shift=shift,
        spatial_rotation=0.0,
        spatial_scale=spatial_scale,
        value_shift=value_shift,
        value_scale=value_scale,
    )
