"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericsError -> 4.
"""


class HydrolearnError(Exception):
    """Base class for all package errors."""


class ConfigError(HydrolearnError):
    """Invalid configuration, parameters, or term grammar."""


class DataError(HydrolearnError):
    """Bad or missing data: file I/O, format violations, grid mismatches."""


class NumericsError(HydrolearnError):
    """Numerical failure: non-finite values, rank deficiency, blowup."""
