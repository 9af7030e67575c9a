"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid run or experiment configuration.

    ``field`` names the offending configuration entry when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DegenerateProblemError(ValueError):
    """The problem constants make a step-size rule undefined (e.g. zero gradient bound)."""


class UnsupportedSuiteError(NotImplementedError):
    """An exact computation was requested for a task suite that has no closed form."""


class RunAborted(RuntimeError):
    """A solver run hit a non-finite or runaway gradient."""

    def __init__(self, message, iteration):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")
