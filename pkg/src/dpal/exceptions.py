"""Exception types raised across the package."""


class DpalError(Exception):
    """Base class for all errors raised by dpal."""


class ParameterError(DpalError, ValueError):
    """A parameter lies outside the range an operation accepts."""


class DimensionError(DpalError, ValueError):
    """Array shapes are inconsistent."""


class ConvergenceError(DpalError, RuntimeError):
    """An iterative routine ran out of budget.

    ``bracket`` holds the last (lower, upper) interval known to contain the
    quantity being computed.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class SolverError(DpalError, RuntimeError):
    """The simplex solver hit its pivot limit.

    ``incumbent`` is the best primal point found so far, ``objective`` its value.
    """

    def __init__(self, message, incumbent=None, objective=None):
        super().__init__(message)
        self.incumbent = incumbent
        self.objective = objective


class ConstructionError(DpalError, RuntimeError):
    """A randomized construction did not reach its target size."""

    def __init__(self, message, achieved=0, target=0, partial=None):
        super().__init__(message)
        self.achieved = achieved
        self.target = target
        self.partial = partial


class ResourceError(DpalError, RuntimeError):
    """A guard on enumeration size or matrix dimensions was exceeded."""

    def __init__(self, message, estimate=None, limit=None):
        super().__init__(message)
        self.estimate = estimate
        self.limit = limit


class NotFoundError(DpalError, LookupError):
    """An exhaustive attack found no candidate passing its filter."""


class SchemaError(DpalError, ValueError):
    """An input file does not match its schema.

    ``problems`` lists every violation found; ``byte_offset`` is set for
    files that fail to parse at all.
    """

    def __init__(self, message, problems=(), byte_offset=None):
        super().__init__(message)
        self.problems = list(problems)
        self.byte_offset = byte_offset
