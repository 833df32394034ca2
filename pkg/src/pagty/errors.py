"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3 and numeric failures (NaN/Inf during training) with 4.
"""


class ConfigError(ValueError):
    """A model, training or block configuration is invalid."""


class ShapeError(ValueError):
    """A tensor does not have the shape an operation requires."""


class DataError(RuntimeError):
    """Dataset files or label values are unusable."""


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""
