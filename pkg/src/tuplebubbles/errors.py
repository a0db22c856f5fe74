"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EngineError):
    """Invalid configuration file, key, or parameter value."""


class DataError(EngineError):
    """CSV ingestion or schema/foreign-key declaration problem."""


class SqlError(EngineError):
    """Base for query front-end errors; carries an optional text position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ParseError(SqlError):
    """Query text does not match the supported grammar."""


class BindError(SqlError):
    """Parsed query does not resolve against the loaded catalog."""


class UnanswerableQueryError(EngineError):
    """Valid query that the built model cannot answer (e.g. no chain order)."""


class DegenerateNetworkError(EngineError):
    """Inference was requested on a network learned from an empty bubble."""


class ModelFormatError(EngineError):
    """Model directory is missing, corrupt, or has a mismatched format tag."""
