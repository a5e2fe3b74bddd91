"""Exception hierarchy.

Validation problems (bad shapes, bad parameters, malformed input files) derive
from :class:`ValidationError`; numerical failures during optimisation derive
from :class:`ConvergenceError`. The CLI maps the first family to exit code 1
and everything else to exit code 2.
"""


class KonmfError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(KonmfError, ValueError):
    """Inputs violate a documented precondition."""


class ShapeError(ValidationError):
    """Matrix dimensions are incompatible."""


class DataFormatError(ValidationError):
    """An input file could not be parsed into a dataset."""


class ConvergenceError(KonmfError, RuntimeError):
    """The optimiser produced a non-finite or inconsistent value.

    ``restart`` is the position of the offending restart within its batch,
    when known.
    """

    def __init__(self, message: str, restart=None):
        super().__init__(message)
        self.restart = restart
