"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage errors exit 1,
format/version errors exit 2, numerical failures exit 3.
"""


class TrojanScanError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(TrojanScanError):
    """An array does not have the shape a layer or operation expects."""


class FormatError(TrojanScanError):
    """A model/dataset file is not in the expected container format."""


class VersionError(FormatError):
    """A container file was written by a newer format version."""


class TruncatedFileError(FormatError):
    """A container file ends before all declared payload bytes."""


class NumericalError(TrojanScanError):
    """A computation produced non-finite values."""


class TrainingDivergedError(NumericalError):
    """Training loss became non-finite; usually the learning rate is too large."""


class ConfigError(TrojanScanError):
    """Invalid configuration or argument values."""
