"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3 and I/O problems (``OSError``) with 4.
"""


class KmspcError(Exception):
    """Base class for toolkit errors."""


class ValidationError(KmspcError, ValueError):
    """Invalid input: bad shapes, out-of-range arguments, malformed files."""


class DataFormatError(ValidationError):
    """A data file could not be parsed.

    ``row`` and ``column`` are 1-based positions inside the file when known.
    """

    def __init__(self, message, row=None, column=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        full = f"{', '.join(where)}: {message}" if where else message
        super().__init__(full)
        self.row = row
        self.column = column
        self.path = path


class NumericalError(KmspcError, ArithmeticError):
    """A computation failed numerically (rank deficiency, non-finite loss...)."""


class RankError(NumericalError):
    """Requested more components than the numerical rank supports."""

    def __init__(self, requested, rank):
        super().__init__(
            f"requested {requested} components but the numerical rank is {rank}"
        )
        self.requested = requested
        self.rank = rank
