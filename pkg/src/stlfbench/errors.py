"""Exception types shared across the package."""


class BenchError(Exception):
    """Base class for all package-specific errors."""


class DataError(BenchError):
    """Malformed, incomplete, or inconsistent input data."""


class ConfigError(BenchError):
    """Invalid configuration (unknown keys, incompatible options)."""


class LeakageError(BenchError):
    """An operation attempted to read data outside its allowed partition."""


class ShapeError(BenchError):
    """Array shapes inconsistent with the declared contract."""


class TrainingError(BenchError):
    """Training could not produce a usable model."""


class KernelError(BenchError):
    """Native similarity kernel unavailable or handshake failed."""
