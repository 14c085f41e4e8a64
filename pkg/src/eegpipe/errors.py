"""Error taxonomy shared by the library, the service and the CLI.

The three leaf classes map onto the process exit codes (1/2/3) and onto the
HTTP error kinds emitted by the service.
"""


class EegPipeError(Exception):
    """Base class for all pipeline errors."""

    kind = "error"
    exit_code = 1


class ConfigError(EegPipeError):
    """Unusable configuration or request: unknown preset, bad spec, bad flag."""

    kind = "usage"
    exit_code = 1


class DataError(EegPipeError):
    """Malformed or inconsistent input data: bad EDF bytes, inverted intervals,
    missing electrodes, mismatched durations."""

    kind = "data"
    exit_code = 2


class NumericError(EegPipeError):
    """Numeric failure during computation: non-finite values, degenerate ranges."""

    kind = "numeric"
    exit_code = 3
