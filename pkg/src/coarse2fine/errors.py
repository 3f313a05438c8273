"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class RefineError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(RefineError, ValueError):
    exit_code = 2


class InputError(RefineError, ValueError):
    exit_code = 3


class ShapeError(InputError):
    pass


class LoadError(InputError):
    """Raised by the file readers; the message names the offending file and row/column."""


class ParseError(LoadError):
    pass


class DimensionError(LoadError):
    pass


class HierarchyViolationError(LoadError):
    def __init__(self, row, coarse_index, message=None):
        self.row = row
        self.coarse_index = coarse_index
        super().__init__(
            message
            or f"row {row}: coarse label {coarse_index} disagrees with the OR of its fine children"
        )


class StorageError(RefineError, OSError):
    exit_code = 4
