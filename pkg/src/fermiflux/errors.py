"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`FermifluxError`
so that the command line can map it to an exit status.
"""


class FermifluxError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FermifluxError, ValueError):
    """Non-finite, empty or otherwise malformed arguments."""


class SommerfeldDomainError(FermifluxError, ValueError):
    """A reservoir left the degenerate regime where the expansions hold."""

    def __init__(self, message, index=None, x=None):
        super().__init__(message)
        self.index = index
        self.x = x


class UnsupportedCaseError(FermifluxError, ValueError):
    """The requested closed form does not exist for these inputs."""


class NumericError(FermifluxError, ArithmeticError):
    """A numerical procedure failed to deliver the requested accuracy."""


class QuadratureError(NumericError):
    pass


class SingularJacobianError(NumericError):
    """The (T, x) rate equations cannot be solved for this state."""


class EquilibriumSolverError(NumericError):
    def __init__(self, message, iterate=None, residuals=None):
        super().__init__(message)
        self.iterate = iterate
        self.residuals = residuals


class StiffnessError(NumericError):
    """Step size collapsed; carries the state at failure."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class IntegrityError(FermifluxError, AssertionError):
    """A conservation law or the second law was violated beyond tolerance."""

    def __init__(self, message, t=None, detail=None):
        super().__init__(message)
        self.t = t
        self.detail = detail or {}


class ScenarioError(FermifluxError, ValueError):
    """Scenario file could not be parsed or failed validation."""

    def __init__(self, message, path=None, line=None, field=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(field)
        full = f"{': '.join([', '.join(loc), message])}" if loc else message
        super().__init__(full)
        self.path = path
        self.line = line
        self.field = field


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4


def exit_status(exc: BaseException) -> int:
    """Process exit status for an exception raised by the package.

    File system errors count as invalid input (an unreadable scenario or an
    unwritable output directory). Anything unexpected is re-raised.
    """
    if isinstance(exc, IntegrityError):
        return EXIT_INVARIANT
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (FermifluxError, OSError)):
        return EXIT_VALIDATION
    raise exc
