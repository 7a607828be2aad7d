"""Exception types raised across the toolkit."""


class SchwarzPdeError(Exception):
    """Base class for all toolkit errors."""


class GenerationError(SchwarzPdeError):
    """Random shape generation exhausted its retry budget."""


class MeshingError(SchwarzPdeError):
    """Triangulation or submesh extraction failed."""


class SpecificationError(SchwarzPdeError):
    """Problem data inconsistent with the mesh (BC coverage, field sizes, ...)."""


class CoercivityError(SpecificationError):
    """Nonpositive coefficient, diffusivity, or time step."""


class IterativeFailureError(SchwarzPdeError):
    """Linear iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, achieved_residual: float):
        super().__init__(f"{message} (achieved relative residual {achieved_residual:.3e})")
        self.achieved_residual = achieved_residual


class NonlinearFailureError(SchwarzPdeError):
    """Fixed-point (Picard) iteration failed to converge."""

    def __init__(self, message: str, residual_history: list[float]):
        super().__init__(message)
        self.residual_history = residual_history


class UndefinedMetricError(SchwarzPdeError):
    """Relative error requested against a zero-norm reference."""


class PartitionError(SchwarzPdeError):
    """Graph partitioning preconditions or postconditions violated."""


class UnsupportedTransformError(SchwarzPdeError):
    """Transform outside the equation's symmetry group."""


class SurrogateLoadError(SchwarzPdeError):
    """Surrogate weight file missing, malformed, or with mismatched shapes."""


class UnsupportedBySurrogateError(SchwarzPdeError):
    """Local problem outside the surrogate's supported class."""


class ConfigurationError(SchwarzPdeError):
    """Invalid solver configuration."""


class LocalSolveError(SchwarzPdeError):
    """A subdomain solve failed inside the iteration (index in the message)."""
