"""Exception hierarchy shared across the package."""


class CTFError(Exception):
    """Base class for all package errors."""


class InputError(CTFError, ValueError):
    """Malformed or empty input."""


class DecodeError(InputError):
    """A symbol could not be mapped onto the declared alphabet."""

    def __init__(self, symbol, position):
        self.symbol = symbol
        self.position = position
        super().__init__(f"unknown symbol {symbol!r} at position {position}")


class InsufficientDataError(InputError):
    """The sequence is too short for the requested maximal order."""


class DimensionError(CTFError, ValueError):
    """Array shapes or lengths do not match."""


class SizeError(CTFError, ValueError):
    """A dense object would exceed the configured size cap."""


class ConsistencyError(CTFError, RuntimeError):
    """An internal sampler invariant was violated."""


class ConfigurationError(CTFError, ValueError):
    """Requested output was not configured at fit time."""


class UndefinedBayesFactorError(CTFError, ZeroDivisionError):
    """Both posterior hypothesis probabilities are zero."""


class HypothesisParseError(InputError):
    """A hypothesis line could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
