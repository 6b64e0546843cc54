"""Exception types shared across the package.

The CLI maps these onto exit codes, so library code should raise the
most specific type that applies: ConfigError for bad options or config
files, DataFormatError for malformed or inconsistent data, NumericError
for non-finite values produced during computation.
"""


class ConfigError(ValueError):
    """Invalid configuration value or unusable option combination."""


class DataFormatError(ValueError):
    """Malformed input file or data violating a structural invariant."""


class NumericError(ArithmeticError):
    """Computation produced NaN/inf or otherwise lost numeric validity."""
