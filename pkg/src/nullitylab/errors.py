"""Exception hierarchy shared by all modules."""


class NullityLabError(Exception):
    """Base class for every error raised by nullitylab."""


class DomainError(NullityLabError, ValueError):
    """A point lies outside the closed unit disk."""


class MarginError(NullityLabError, ValueError):
    """A finite-difference stencil would leave the region where data exists."""


class ConstructionError(NullityLabError, ValueError):
    """Invalid parameters for a built-in immersion family."""


class DegenerateImmersionError(NullityLabError, ArithmeticError):
    """The jacobian is rank deficient, so no normal frame exists."""


class UnsupportedError(NullityLabError):
    """The operation is undefined for this codimension or configuration."""


class ValidationError(NullityLabError, ValueError):
    """Input arrays fail a structural check (shape, symmetry)."""


class PreconditionError(NullityLabError, ValueError):
    """A documented precondition of the operation does not hold."""


class CertificationError(NullityLabError, ArithmeticError):
    """A numerical certificate failed (e.g. a form is not flat)."""


class ResolutionError(NullityLabError):
    """The sampling is too coarse for the requested search radius."""
