"""Exception types shared across the package.

The CLI maps these onto exit codes: parse/validation/config problems
exit 2, protocol and I/O failures exit 3.
"""

from __future__ import annotations


class NnelError(Exception):
    """Base class for all package errors."""


class ParseError(NnelError):
    """Malformed input file (bad JSON, TSV, standoff, or binary syntax)."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class ValidationError(NnelError):
    """Structurally well-formed input that violates a domain invariant."""


class ConfigError(NnelError):
    """Invalid configuration value or flag combination."""


class ProtocolError(NnelError):
    """External scorer protocol violation or transport failure."""
