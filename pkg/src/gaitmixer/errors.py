"""Exception hierarchy shared across the package.

The CLI maps each family to its own exit code, so raise the most specific
class that applies.
"""


class GaitMixerError(Exception):
    """Base class for all package errors."""


class ConfigError(GaitMixerError, ValueError):
    """Invalid configuration, hyperparameter or call contract."""


class ShapeError(GaitMixerError, ValueError):
    """Tensor dimensions do not line up."""


class GraphError(GaitMixerError, RuntimeError):
    """Misuse of the recorded operation graph (e.g. double backward)."""


class DataError(GaitMixerError, ValueError):
    """Input data could not be read or violates its format."""


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class SequenceTooShort(DataError):
    """Sequence has fewer frames than the evaluation window."""


class NumericError(GaitMixerError, ArithmeticError):
    """Non-finite loss or similar numerical failure."""
