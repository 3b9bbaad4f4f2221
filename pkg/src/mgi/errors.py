"""Exception types shared across the toolkit.

The CLI maps these onto its exit-code contract, so analysis code should
raise the most specific one that applies.
"""


class MgiError(Exception):
    """Base class for all toolkit errors."""


class ParseError(MgiError):
    """Input bytes could not be read or decoded as telemetry CSV."""


class SchemaError(MgiError):
    """Column schema or config file is malformed or inconsistent."""


class ConfigError(SchemaError):
    """Simulator / pipeline configuration is invalid."""


class DataError(MgiError):
    """Data fails a precondition of the requested operation (gaps,
    too short a span, zero variance, insufficient lookback, ...)."""
