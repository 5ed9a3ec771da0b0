"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data and weight-container problems exit 2, numerical failures exit 3.
"""


class CxrnetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(CxrnetError, ValueError):
    """An operand has an incompatible shape; the message names the axis."""


class ConfigError(CxrnetError, ValueError):
    """Invalid configuration value (ratios, batch size, flags...)."""


class DatasetError(CxrnetError):
    """Dataset layout or image decoding problem."""


class ContainerError(CxrnetError):
    """Base class for weight-container failures."""


class ManifestMissingError(ContainerError):
    """The container directory has no manifest.json."""


class FormatVersionError(ContainerError):
    """manifest.json declares a format_version this code does not read."""


class ManifestError(ContainerError):
    """manifest.json is present but malformed (bad dtype, duplicate names...)."""


class MissingBlobError(ContainerError):
    """A tensor record points at a blob file that does not exist."""


class TruncatedBlobError(ContainerError):
    """A blob file is shorter than its records require."""


class NonFiniteWeightError(ContainerError):
    """A loaded tensor contains NaN or infinity."""


class WeightValidationError(CxrnetError):
    """A weight set does not match the model it is meant to drive."""


class TrainingDivergedError(CxrnetError):
    """The training loss became NaN or infinite."""
