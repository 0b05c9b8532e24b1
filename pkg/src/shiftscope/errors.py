"""Exception types shared across the package.

Every error carries a short machine-readable ``category`` used by the CLI
to emit single-line parseable failures and pick the exit code.
"""


class ShiftScopeError(Exception):
    """Base class for all package errors."""

    category = "INTERNAL"
    exit_code = 1


class InputError(ShiftScopeError):
    """User-supplied data or configuration is invalid."""

    category = "INVALID_INPUT"
    exit_code = 2


class SchemaMismatch(InputError):
    category = "SCHEMA_MISMATCH"


class ValidationError(InputError):
    category = "VALIDATION_ERROR"


class TooFewDistinctValues(InputError):
    category = "TOO_FEW_DISTINCT_VALUES"

    def __init__(self, column: str, distinct: int, bins: int):
        self.column = column
        super().__init__(
            f"column {column!r} has {distinct} distinct values, need at least {bins}"
        )


class MissingAxis(InputError):
    category = "MISSING_AXIS"


class TooManyCandidates(InputError):
    category = "TOO_MANY_CANDIDATES"


class SingularConfusion(ShiftScopeError):
    category = "SINGULAR_CONFUSION"


class DegenerateKernel(ShiftScopeError):
    category = "DEGENERATE_KERNEL"


class RowCountMismatch(InputError):
    category = "ROW_COUNT_MISMATCH"


class MalformedRow(InputError):
    category = "MALFORMED_ROW"

    def __init__(self, line_number: int, detail: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {detail}")


class EmptyCell(InputError):
    category = "EMPTY_CELL"

    def __init__(self, cell, detail: str = "no base rows match cell"):
        self.cell = cell
        super().__init__(f"{detail}: {cell}")


class MissingTruth(InputError):
    category = "MISSING_TRUTH"
