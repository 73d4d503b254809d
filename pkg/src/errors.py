"""
Exception hierarchy shared by every kernelvis module.
"""


class KernelVisError(Exception):
    """Base class for all kernelvis errors."""


class ShapeError(KernelVisError, ValueError):
    """A tensor shape or dimension contract was violated."""


class ArgumentError(KernelVisError, ValueError):
    """A scalar argument is outside its valid domain."""


class TrackStateError(KernelVisError, RuntimeError):
    """The tracker was driven without a valid state."""


class GenerationError(KernelVisError, RuntimeError):
    """A synthetic clip cannot be generated from the given configuration."""


class ConfigError(KernelVisError, ValueError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class CheckpointError(KernelVisError, RuntimeError):
    """A checkpoint is missing or does not match the model it is loaded into."""


class TensorFileError(KernelVisError, IOError):
    """A portable tensor file is malformed."""


class FormatError(KernelVisError, IOError):
    """A text manifest or result file is malformed."""
