"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Malformed well-configuration text or an invalid configuration.

    `offset` is the character offset into the parsed text (``None`` when the
    configuration was built programmatically).
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class TopologyError(ValueError):
    pass


class LibraryError(KeyError):
    """The primitive library has no primitive for a requested transition."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MissingCostError(ValueError):
    """A step has no excitation cost and no measured baseline covers it."""


class InfeasibleError(ValueError):
    def __init__(self, message, constraint=None, violation=None):
        self.constraint = constraint
        self.violation = violation
        super().__init__(message)


class RankDeficientError(ValueError):
    def __init__(self, message, null_dim):
        self.null_dim = null_dim
        super().__init__(message)


class DatasetFormatError(ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
