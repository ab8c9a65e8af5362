"""Exception hierarchy shared by every module."""


class DegenLabError(Exception):
    """Base class for all library errors."""


class NonFinite(DegenLabError, ValueError):
    pass


class IndexOutOfRange(DegenLabError, IndexError):
    pass


class PlugUnavailable(DegenLabError, LookupError):
    pass


class OperatorUnavailable(DegenLabError, LookupError):
    pass


class OutOfScope(DegenLabError, ValueError):
    """Raised by checkers that require k < N."""


class BadParam(DegenLabError, ValueError):
    pass


class OutOfDomain(DegenLabError, ValueError):
    pass


class EmptyComplement(DegenLabError, ValueError):
    pass


class ParseError(DegenLabError, ValueError):
    """Expression or scenario parse failure.

    ``offset`` is the byte offset into the source (expressions) and
    ``expected`` the set of tokens that would have been accepted there.
    """

    def __init__(self, message, offset=None, expected=(), location=None):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        self.location = location
        detail = message
        if offset is not None:
            detail += f" at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        if location:
            detail += f" [{location}]"
        super().__init__(detail)


class EvalDomain(DegenLabError, ValueError):
    pass


class NotOnBoundary(DegenLabError, ValueError):
    pass


class NotSmooth(DegenLabError, ValueError):
    pass


class EmptyRegion(DegenLabError, ValueError):
    pass


class EmptyBoundary(DegenLabError, ValueError):
    pass


class GridTooCoarse(DegenLabError, ValueError):
    pass


class BadNesting(DegenLabError, ValueError):
    pass


class BadForcing(DegenLabError, ValueError):
    pass


class NotNonnegative(DegenLabError, ValueError):
    pass


class ValidationError(DegenLabError, ValueError):
    """Scenario validation failure naming the offending key."""

    def __init__(self, key, message=None, check=None):
        self.key = key
        self.check = check
        text = message or f"missing or invalid key {key!r}"
        if check:
            text += f" (required by check {check!r})"
        super().__init__(text)
