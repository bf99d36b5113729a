"""Exception hierarchy shared by all entrovol modules.

The CLI maps these onto exit codes: domain/usage problems exit 2,
numerical failures exit 3.
"""


class EntrovolError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EntrovolError, ValueError):
    """Invalid argument or state: wrong sign, out-of-range value, bad unit."""


class ContractError(DomainError):
    """An API was called in a way its contract forbids (wrong model, mismatched grids)."""


class ParseError(DomainError):
    """A data file could not be parsed; carries the offending location."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class NumericError(EntrovolError, RuntimeError):
    """A numerical routine failed to reach its accuracy target."""
