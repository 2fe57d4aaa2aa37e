"""Exception types shared across the package."""


class DiffconeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DiffconeError):
    """An atom was applied to arguments with incompatible shapes."""


class DeclarationError(DiffconeError):
    """A leaf is undeclared, duplicated, or inconsistently declared."""


class CompileError(DiffconeError):
    """A problem failed verification and cannot be compiled.

    Carries the full report so callers can inspect individual violations.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverInputError(DiffconeError):
    """Cone program data contains NaN/Inf or inconsistent dimensions."""


class SolveStatusError(DiffconeError):
    """An operation required an optimal solution but did not get one."""


class ParseError(DiffconeError):
    """A problem or values document is malformed.

    ``location`` is a human-readable position (JSON path or line/column)
    and ``token`` names the offending item when known.
    """

    def __init__(self, message, location=None, token=None):
        detail = message
        if location is not None:
            detail = f"{detail} (at {location})"
        if token is not None:
            detail = f"{detail} [token: {token!r}]"
        super().__init__(detail)
        self.location = location
        self.token = token
