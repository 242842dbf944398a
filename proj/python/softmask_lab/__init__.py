"""Soft-mask background suppression and two-stream re-ID, C++ core."""

from ._core import (
    ConfigError,
    Error,
    NumericError,
    PrerequisiteError,
    ProtocolError,
    bgs_term,
    config_hash,
    da2s_features,
    default_config,
    domain_distance,
    evaluate,
    run_command,
    sc_term,
    synthetic_corpus,
    wiring,
)

__all__ = [
    "ConfigError",
    "Error",
    "NumericError",
    "PrerequisiteError",
    "ProtocolError",
    "bgs_term",
    "config_hash",
    "da2s_features",
    "default_config",
    "domain_distance",
    "evaluate",
    "run_command",
    "sc_term",
    "synthetic_corpus",
    "wiring",
]
