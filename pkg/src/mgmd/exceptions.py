"""Exception types raised across the detector."""


class InvalidInputError(ValueError):
    """An argument violates an operation's preconditions."""


class EstimationError(RuntimeError):
    """A robust model fit could not produce a usable model."""


class UnavailableError(LookupError):
    """Data needed for a computation is not held (e.g. a missing homography step)."""


class BackendError(RuntimeError):
    """An appearance backend failed or violated its wire protocol."""


class ParseError(ValueError):
    """A file could not be parsed. Carries the path and 1-based line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        loc = f"{self.path}:{lineno}" if lineno is not None else self.path
        super().__init__(f"{loc}: {message}")
