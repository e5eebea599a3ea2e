"""Exception types. The CLI maps each to an exit code."""


class DactagError(Exception):
    exit_code = 1


class UsageError(DactagError):
    """Bad flags, bad config keys or values."""

    exit_code = 1


class ConfigError(UsageError):
    pass


class DataError(DactagError):
    """Malformed corpus, embedding or checkpoint files; tag-set mismatches."""

    exit_code = 2


class NumericError(DactagError, ArithmeticError):
    """A forward op produced NaN or Inf."""

    exit_code = 3
