"""Python access to the sdecade C++ core."""

from ._core import (
    ConfigError,
    cascade_gaps,
    command_names,
    expm,
    fk_linear_1d,
    iterated_ad,
    normalize_config,
    realize_linear,
    run_command,
    schema_help,
)

__all__ = [
    "ConfigError",
    "cascade_gaps",
    "command_names",
    "expm",
    "fk_linear_1d",
    "iterated_ad",
    "normalize_config",
    "realize_linear",
    "run_command",
    "schema_help",
]
