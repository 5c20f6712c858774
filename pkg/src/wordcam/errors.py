"""Exception taxonomy shared by the pipeline and the CLI exit codes."""


class ConfigError(ValueError):
    """Invalid or contradictory configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Unreadable, empty, or malformed input data (CLI exit code 3)."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss (CLI exit code 4)."""
