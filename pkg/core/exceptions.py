# core/exceptions.py
# one hierarchy for every failure the numerical apps can raise


class GrowthLabError(Exception):
    """Base class for all solver, diagnostic and configuration failures."""


class InvalidParameter(GrowthLabError, ValueError):
    """A typed value (grid, controls, law) was built with out-of-range parameters."""


class DomainViolation(GrowthLabError, ValueError):
    """
    Evaluation outside dom(f), or a density at/above a finite density cap.
    Carries the offending value and, for fields, the cell index.
    """

    def __init__(self, message, value=None, cell=None):
        super().__init__(message)
        self.value = value
        self.cell = cell


class ConvexityError(GrowthLabError, ValueError):
    """Improper input to a convex-analysis operation."""


class CouplingRelationError(GrowthLabError):
    """An (e, z) pair failed the coupling relation a*c - e(a) = z'(b)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class MultivaluedPressureError(GrowthLabError):
    """A law with a multivalued pressure graph was handed to a stepper."""


class SolverDivergence(GrowthLabError):
    """The Helmholtz solve did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TimeStepUnderflow(GrowthLabError):
    """dt fell below the floor or the step budget ran out."""

    def __init__(self, message, dt=None, suggested_cells=None):
        super().__init__(message)
        self.dt = dt
        self.suggested_cells = suggested_cells


class DomainTooSmall(GrowthLabError):
    """Density reached the boundary band of the box."""

    def __init__(self, message, level=None, cell=None):
        super().__init__(message)
        self.level = level
        self.cell = cell


class ConfigError(GrowthLabError):
    """Every problem found in an experiment config, as 'path: message' strings."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
