"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class DocalignError(Exception):
    pass


class ShapeError(DocalignError):
    """Operand shapes do not conform; message carries both shapes."""


class ConfigError(DocalignError):
    pass


class DataError(DocalignError):
    pass


class NumericalError(DocalignError):
    pass
