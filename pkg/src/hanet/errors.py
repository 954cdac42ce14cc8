class HANetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HANetError, ValueError):
    pass


class ConfigError(HANetError, ValueError):
    pass


class DataError(HANetError, ValueError):
    pass


class NumericError(HANetError, ArithmeticError):
    pass


class StateError(HANetError, RuntimeError):
    pass
