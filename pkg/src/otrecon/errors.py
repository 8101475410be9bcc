"""Exception taxonomy shared by all modules.

The CLI maps each class to a distinct exit code, so shell harnesses can
assert error categories without parsing messages.
"""


class OtreconError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(OtreconError):
    """Shapes or axis sizes are incompatible with the requested operation."""


class EmptyInputError(OtreconError):
    """An operation received an empty collection where at least one item is required."""


class NotARepetitionError(OtreconError):
    """A volume claimed to be a depth-repetition has non-identical slices."""


class InvalidPhantomError(OtreconError):
    """Phantom description is degenerate (e.g. non-positive semi-axes)."""


class NumericInputError(OtreconError):
    """Inputs contain NaN/Inf or otherwise non-finite values."""


class ContractError(OtreconError):
    """A documented precondition of an operation was violated."""


class CheckpointError(OtreconError):
    """A checkpoint file is missing, truncated or malformed."""
