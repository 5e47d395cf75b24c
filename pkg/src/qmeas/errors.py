"""Exception hierarchy shared by all qmeas modules."""


class QmeasError(Exception):
    """Base class for every error raised by qmeas."""


class InvalidArgumentError(QmeasError, ValueError):
    pass


class DimensionMismatchError(QmeasError, ValueError):
    pass


class PreconditionError(QmeasError, ValueError):
    """An input violates a documented precondition (e.g. a grid too narrow)."""


class GridResolutionError(QmeasError, RuntimeError):
    """Quadrature grid too coarse: POVM completeness defect above tolerance."""


class DegenerateStateError(QmeasError, ArithmeticError):
    """A relative quantity would divide by a vanishing expectation value."""


class StepSizeError(QmeasError, RuntimeError):
    """Time step too large: trace drift or loss of positivity."""


class SingularParametersError(QmeasError, ArithmeticError):
    pass


class InvalidRegimeError(QmeasError, ValueError):
    pass


class UnsupportedBranchError(QmeasError, ValueError):
    pass


class ConfigError(QmeasError, ValueError):
    """Malformed or unknown experiment configuration."""
