"""Exception types shared across the package."""


class TrajGroupError(Exception):
    """Base class for all package errors."""


class ConfigError(TrajGroupError, ValueError):
    """Invalid configuration: unknown dataset, bad parameters, empty training set."""


class ParseError(TrajGroupError, ValueError):
    """A malformed line in an annotation or cache file."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DuplicateRecordError(ParseError):
    """The same (frame_id, ped_id) pair appears twice in one file."""


class ContractViolation(TrajGroupError, ValueError):
    """A function was called outside its documented preconditions."""
