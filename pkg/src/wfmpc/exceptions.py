"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """An argument violates a documented precondition."""


class InternalConsistencyError(RuntimeError):
    """A computed state or matrix violates an invariant that should always hold."""


class DegenerateBaselineError(ValueError):
    """Normalization requested against a baseline with zero-valued metrics."""


class ScenarioError(ValueError):
    """A scenario file is missing a field or carries an invalid value.

    The offending field name is available as ``field``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
