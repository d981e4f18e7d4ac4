"""Exception hierarchy shared by every module."""


class UCScreenError(Exception):
    """Base class for all package errors."""


class SchemaError(UCScreenError):
    """A case document is missing a required field or carries an unknown one."""


class ValidationError(UCScreenError):
    """A data invariant is violated.

    ``path`` names the offending field, e.g. ``lines[0].flow_limit``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class DisconnectedNetworkError(ValidationError):
    def __init__(self, message="network graph is not connected"):
        super().__init__("lines", message)


class SingularNetworkError(UCScreenError):
    pass


class DimensionError(UCScreenError):
    pass


class NegativeLoadError(ValidationError):
    pass


class NumericalBreakdownError(UCScreenError):
    pass


class IterationLimitError(UCScreenError):
    pass


class NodeLimitError(UCScreenError):
    pass


class NotOptimalError(UCScreenError):
    pass


class InvalidFixError(UCScreenError):
    pass


class ScheduleCoverageError(UCScreenError):
    pass


class InvalidRangeError(UCScreenError):
    pass


class CoverageError(UCScreenError):
    pass


class UniverseMismatchError(UCScreenError):
    pass


class EmptyTrainingError(UCScreenError):
    pass


class DimensionMismatchError(DimensionError):
    pass


class TooLargeError(UCScreenError):
    pass
