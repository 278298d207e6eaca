"""Exception taxonomy shared across the package."""


class FedAlignError(Exception):
    """Base class for all package errors."""


class ConfigError(FedAlignError):
    """Invalid configuration, dimensions, or arguments. CLI exit code 2."""


class DataFormatError(FedAlignError):
    """Malformed input file or violated data invariant. CLI exit code 2."""


class DivergenceError(FedAlignError):
    """Training produced a non-finite loss or gradient. CLI exit code 3.

    ``history`` carries the completed rounds when divergence happens
    mid-federation, so partial output can still be written.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history


class ProtocolError(FedAlignError):
    """Federation bookkeeping violated, e.g. aggregating zero updates."""


class InternalError(FedAlignError):
    """Inconsistent internal state, e.g. a stale backward tape."""
