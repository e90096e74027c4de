"""Result files: CSV tables, manifest and plots."""

from .plots import plot_series
from .writers import (
    DIAGNOSTICS_COLUMNS,
    PROFILE_COLUMNS,
    profile_name,
    read_profile,
    read_table,
    write_diagnostics,
    write_manifest,
    write_profile,
    write_table,
)

__all__ = [
    "DIAGNOSTICS_COLUMNS",
    "PROFILE_COLUMNS",
    "plot_series",
    "profile_name",
    "read_profile",
    "read_table",
    "write_diagnostics",
    "write_manifest",
    "write_profile",
    "write_table",
]
