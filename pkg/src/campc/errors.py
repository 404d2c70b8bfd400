"""Exception hierarchy shared across the package."""


class CampcError(Exception):
    """Base class for all errors raised by campc."""


class ConfigError(CampcError, ValueError):
    """Invalid scenario, model or controller configuration."""


class EmptySetError(CampcError):
    """A polytope that must be nonempty turned out to be empty."""


class ControllerError(CampcError):
    """A control step could not be completed.

    Carries the diagnostics collected up to the failure, if any.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class StartupError(ControllerError):
    """No admissible initial plan exists for the requested initial state."""


class InvariantBreach(ControllerError):
    """An invariant that the theory guarantees was found violated."""
