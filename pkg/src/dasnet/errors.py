"""Exception types shared across the package."""


class DasnetError(Exception):
    """Base class for all dasnet errors."""


class ShapeMismatchError(DasnetError, ValueError):
    """Operand shapes do not compose."""


class DegenerateInputError(DasnetError, ValueError):
    """Input carries no signal (e.g. all-zero energy), result undefined."""


class DataFormatError(DasnetError, ValueError):
    """A dataset file does not match its expected binary format."""


class UntrainedNetworkError(DasnetError, RuntimeError):
    """Operation requires a trained network."""


class MissingArtifactError(DasnetError, FileNotFoundError):
    """A required upstream artifact (checkpoint, report) is absent."""
