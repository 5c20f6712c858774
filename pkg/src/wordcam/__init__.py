"""Sentence sentiment CNN with per-word class-activation attention."""

from wordcam.errors import ConfigError, DataError, DivergenceError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "DivergenceError", "__version__"]
