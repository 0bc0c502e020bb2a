class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class StructuralError(ValueError):
    """Incompatible meshes or functions (non-nested meshes, mesh mismatch)."""


class SolverError(RuntimeError):
    """A linear solve failed or did not converge."""
