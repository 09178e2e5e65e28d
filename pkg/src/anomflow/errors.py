"""Exception hierarchy shared by the whole package.

The CLI maps these onto exit codes: parse/validation problems are data
errors (exit 2), configuration problems are config errors (exit 3), and
anything else is treated as an internal fault (exit 4).
"""


class AnomflowError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AnomflowError):
    """Input bytes could not be decoded into records."""


class ValidationError(AnomflowError):
    """Well-formed input violates a data invariant."""


class ConfigError(AnomflowError):
    """A parameter or configuration value is out of its legal range."""


class GridCellError(AnomflowError):
    """A grid cell failed; the message carries the cell identity."""
