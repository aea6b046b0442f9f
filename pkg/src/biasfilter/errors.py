"""Exception types shared across the package."""


class BiasFilterError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(BiasFilterError, ValueError):
    """An argument violates an operation's precondition."""


class ShapeError(ContractError):
    """Tensor shapes are inconsistent for the requested operation."""


class ConfigMismatchError(BiasFilterError, ValueError):
    """Two network configurations that must agree do not."""


class NumericalError(BiasFilterError, ArithmeticError):
    """A computation produced a non-finite value."""


class TrainingDivergedError(NumericalError):
    """A training epoch produced a non-finite loss."""


class PayloadError(BiasFilterError, ValueError):
    """Base class for binary container decoding failures."""


class FormatError(PayloadError):
    """Bad magic, unsupported version or inconsistent header fields."""


class CorruptionError(PayloadError):
    """Checksum mismatch or undecodable compressed data."""


class TruncationError(CorruptionError):
    """The byte sequence ends before the container is complete."""
