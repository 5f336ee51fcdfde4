"""Exception types shared across the package."""


class CadLabError(Exception):
    """Base class for all package errors."""


class ValidationError(CadLabError, ValueError):
    """Inputs violate a documented contract (shape, domain, config)."""


class InsufficientDataError(ValidationError):
    """Too few samples to estimate the requested statistic."""


class SingularScatterError(ValidationError):
    """A within-class scatter diagonal entry is zero; the fit is undefined."""


class DegenerateGeometryError(ValidationError):
    """An angle or projection is undefined (zero-norm vector involved)."""


class DivergenceError(CadLabError):
    """Training produced a non-finite loss."""
