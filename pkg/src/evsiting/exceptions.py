"""Exception hierarchy shared by every module of the package."""


class EvSitingError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(EvSitingError, ValueError):
    """A value is outside its documented domain."""


class EmptyInstanceError(EvSitingError, ValueError):
    """An input that must be non-empty is empty."""


class SchemaError(EvSitingError, ValueError):
    """A data file does not match its schema.

    ``problems`` holds ``(row, field, message)`` tuples; ``row`` is the
    1-based data row number (header excluded) or ``None`` for file-level
    problems.
    """

    def __init__(self, path, problems):
        self.path = str(path)
        self.problems = list(problems)
        lines = [f"row {r}, field {f!r}: {m}" if r is not None else f"field {f!r}: {m}"
                 for r, f, m in self.problems]
        super().__init__(f"{self.path}: " + "; ".join(lines))


class ConfigError(EvSitingError, ValueError):
    """A scenario parameter file is missing a key or holds a bad value."""


class InfeasibleInstanceError(EvSitingError):
    """The instance cannot be built into a feasible model.

    ``unreachable_rps`` lists residential points with positive demand and no
    candidate site within range.
    """

    def __init__(self, unreachable_rps):
        self.unreachable_rps = list(unreachable_rps)
        super().__init__(
            "residential points with no reachable site: " + ", ".join(self.unreachable_rps)
        )


class ContractViolationError(EvSitingError, ValueError):
    """A caller broke a documented precondition (e.g. assignment on an unreachable pair)."""


class TooLargeError(EvSitingError):
    """The brute-force oracle refuses instances beyond its guard rails."""


class NumericalError(EvSitingError, ArithmeticError):
    """The LP solver hit numerical breakdown; ``diagnostics`` carries details."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)
