"""Exception hierarchy shared by the readers, the geometry code and the CLI."""


class PanosegError(Exception):
    """Base class for all errors raised by panoseg."""


class ParseError(PanosegError):
    """Malformed or truncated input file.

    ``offset`` is a byte offset into the input when one is meaningful,
    ``line`` a 1-based line number for text formats.
    """

    def __init__(self, message, *, offset=None, line=None, path=None):
        self.offset = offset
        self.line = line
        self.path = path
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.offset is not None:
            where.append(f"byte offset {self.offset}")
        return f"{': '.join(where)}: {msg}" if where else msg


class ValidationError(PanosegError, ValueError):
    """Arguments or data violate a documented invariant."""
