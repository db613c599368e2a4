"""Exception types shared across the package."""

from __future__ import annotations


class ExactLenError(Exception):
    """Base class for every error raised by this package."""


class InvalidTargetError(ExactLenError, ValueError):
    pass


class UnsupportedUnitError(ExactLenError, ValueError):
    pass


class InvalidArgumentsError(ExactLenError, ValueError):
    pass


class EmptyInputError(ExactLenError, ValueError):
    pass


class UndefinedScoreError(ExactLenError, ValueError):
    pass


class JudgeParseError(ExactLenError):
    """The judge reply did not contain a usable 1-10 rating."""


class LoadError(ExactLenError):
    """A dataset file does not match its track schema."""

    def __init__(self, message: str, *, path=None, line: int | None = None, field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class ConfigError(ExactLenError):
    pass


class StorageError(ExactLenError):
    pass
