"""Exceptions raised by histopy.

Every exception carries the exit code used by the command line interface :
2 for configuration errors, 3 for data errors and 4 for numerical failures.
"""


class HistopyError(Exception):
    """Base class of all histopy errors."""

    exit_code = 1


###############################################################################
#                               CONFIGURATION
###############################################################################


class ConfigError(HistopyError):
    """Invalid configuration.

    Parameters
    ----------
    message : str
        Error message
    field : str | None
        Dotted path of the offending configuration field (e.g 'eval.k')
    """

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


###############################################################################
#                                   DATA
###############################################################################


class DataError(HistopyError):
    """Invalid input data."""

    exit_code = 3


class InvalidInput(DataError):
    """Empty or malformed input array."""


class ShapeError(DataError, ValueError):
    """Shapes that do not compose."""


class InsufficientTissue(DataError):
    """Not enough tissue pixels to estimate stain vectors."""


class DegenerateStains(DataError):
    """The optical density cloud does not span two stains."""


class ItemError(DataError):
    """A single dataset item could not be read.

    Parameters
    ----------
    path : str
        Path to the item
    reason : str | ''
        Underlying reason
    """

    def __init__(self, path, reason=''):
        self.path = str(path)
        msg = f"cannot read {self.path}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class InvalidDataset(DataError):
    """Dataset layout that violates the expected structure."""


class EmptyPatient(DataError):
    """Patient without any tile."""


class InvalidTarget(DataError):
    """Target values that the model cannot be fitted on."""


class InvalidPlan(DataError):
    """Cross-validation plan that cannot be built."""


class IoError(DataError):
    """File system failure (unwritable path, corrupted file)."""


class Undefined(DataError):
    """Metric undefined for the given inputs (reported as missing)."""


###############################################################################
#                                 NUMERICAL
###############################################################################


class NumericalError(HistopyError):
    """Non finite values produced by a computation."""

    exit_code = 4
