"""
Exceptions raised by gridtopo. Every error carries the exit code the CLI
should terminate with.
"""

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class GridTopoError(ValueError):
    """Base class for all gridtopo errors"""

    exit_code = EXIT_DATA


class ConfigError(GridTopoError):
    """A config object failed validation"""


class DimensionError(GridTopoError):
    """Array shapes don't agree"""


class LineListError(GridTopoError):
    """Invalid or duplicated line in a line list"""


class CaseFormatError(GridTopoError):
    """Grid case file could not be parsed"""


class SchemaError(GridTopoError):
    """Measurement / matrix file doesn't match the declared model or schema"""


class InsufficientDataError(GridTopoError):
    """Not enough samples to compute a statistic"""


class UndefinedRatioError(GridTopoError):
    """Magnitude ratio requested with no jointly nonzero entries"""


class NumericalError(GridTopoError):
    """Base class for failures of the numerical routines"""

    exit_code = EXIT_NUMERICAL


class SingularSystemError(NumericalError):
    """A linear system could not be factorized, even with jitter"""


class DivergenceError(NumericalError):
    """An iterative solver produced a non-finite objective"""
