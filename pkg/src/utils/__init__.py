"""Utility functions for the MPC meta-tuner."""

from .helpers import (
    artifact_stamp,
    ensure_dir,
    format_date,
    load_json,
    parallel_map,
    save_json,
    sha256_text,
    write_table,
)

__all__ = [
    "artifact_stamp",
    "ensure_dir",
    "format_date",
    "load_json",
    "parallel_map",
    "save_json",
    "sha256_text",
    "write_table",
]
