"""Exception types shared across the package."""


class FpsError(Exception):
    """Base class for all package-specific errors."""


class ContainerFormatError(FpsError):
    """Raised when a feature container file is malformed or truncated."""


class ValidationError(FpsError):
    """Raised when data violates a documented invariant or precondition."""


class NumericalAbort(FpsError):
    """Raised when training hits a non-finite loss.

    Carries the step index and the component breakdown at the failing step
    so the run can be diagnosed without re-running.
    """

    def __init__(self, step: int, components: dict):
        self.step = step
        self.components = dict(components)
        parts = ", ".join(f"{k}={v!r}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")
