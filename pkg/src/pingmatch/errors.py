"""Shared exception base.

Every domain error carries a stable machine-readable ``code`` so the CLI
and the HTTP service can report failures without string matching.
"""

from __future__ import annotations


class PingmatchError(Exception):
    """Base class for all pingmatch domain errors."""

    code = "error"


class ConfigError(PingmatchError):
    """Invalid configuration file or flag value. CLI exits 2 on these."""

    code = "config_invalid"
