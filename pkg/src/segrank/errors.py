"""Exception hierarchy shared by the library and the CLI.

Every exception carries the process exit code the CLI maps it to.
"""


class SegrankError(Exception):
    exit_code = 3


class InputError(SegrankError):
    """Unreadable or missing input file."""

    exit_code = 1


class ConfigError(SegrankError, ValueError):
    """Invalid configuration value."""

    exit_code = 2


class SchemaError(SegrankError, ValueError):
    """Required column missing from a table header."""

    exit_code = 2

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing required column: {column}")


class ParseError(SegrankError, ValueError):
    """A cell could not be parsed as a finite number."""

    exit_code = 2

    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a finite number")


class ValidationError(SegrankError, ValueError):
    """Table content violates a record invariant."""

    exit_code = 2


class DegenerateDataError(SegrankError, ValueError):
    """Data too small or too degenerate for the requested computation."""

    exit_code = 3
