"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so keep the hierarchy flat
and predictable: bad arguments raise :class:`DomainError`, operations
attempted on an impossible state raise :class:`InvalidStateError`, and
solver breakdowns raise :class:`NumericalError`.
"""


class FeesimError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FeesimError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class InvalidStateError(FeesimError, RuntimeError):
    """The request is incompatible with the current model state.

    Example: asking for the residual block-interval law of a fixed
    interval after the deadline has already passed.
    """


class NumericalError(FeesimError, RuntimeError):
    """A numerical procedure failed to reach its accuracy contract."""


class ScenarioError(FeesimError, ValueError):
    """A scenario document failed to parse or validate.

    Carries the 1-based line number of the offending entry when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
