"""Exception hierarchy shared across the package."""


class FslError(Exception):
    """Base class for every error raised by fslkit."""


class ParameterError(FslError, ValueError):
    pass


class DomainError(FslError, ValueError):
    """An index falls outside the function domain."""


class ResourceError(FslError):
    pass


class FormatError(FslError, ValueError):
    """Malformed, truncated, or version-mismatched wire bytes."""


class SequencingError(FslError):
    """Epoch or round numbers arrived out of order."""


class LookupFailure(FslError, KeyError):
    pass


class CuckooInsertionError(FslError):
    """Cuckoo placement exhausted relocations and the stash is full."""

    def __init__(self, message: str, *, placed: int = 0, pending: int = 0):
        super().__init__(message)
        self.placed = placed
        self.pending = pending


class ProtocolError(FslError):
    pass


class StateError(FslError):
    pass


class ModeError(FslError):
    pass


class UnsupportedModelError(FslError):
    pass
