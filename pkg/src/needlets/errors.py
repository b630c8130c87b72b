"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from
:class:`NeedletError`; the CLI maps the subclasses onto exit codes.
"""


class NeedletError(Exception):
    exit_code = 3


class InvalidArgument(NeedletError, ValueError):
    exit_code = 2


class PreconditionError(NeedletError, ValueError):
    exit_code = 2


class ConsistencyError(NeedletError, RuntimeError):
    """A stored table violates an invariant it was built to satisfy."""


class DegenerateSpectrumError(NeedletError, ValueError):
    """Model variance vanishes on the window support."""


class AssumptionViolation(NeedletError, ValueError):
    """Covariance matrix of the statistics is not safely invertible."""


class ResourceLimitError(NeedletError, RuntimeError):
    exit_code = 4
