"""Utility helper functions for the MPC meta-tuner."""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from src import __version__

T = TypeVar("T")
R = TypeVar("R")


def ensure_dir(path: Path) -> Path:
    """Ensure a directory exists, creating it if necessary.

    Args:
        path: Path to the directory

    Returns:
        The same path, guaranteed to exist
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_json(path: Path) -> dict[str, Any]:
    """Load JSON data from a file.

    Args:
        path: Path to the JSON file

    Returns:
        Parsed JSON data as a dictionary

    Raises:
        FileNotFoundError: If the file doesn't exist
        json.JSONDecodeError: If the file contains invalid JSON
    """
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def save_json(data: dict[str, Any], path: Path, indent: int = 2) -> None:
    """Write a report or summary as JSON; numpy scalars and arrays become plain values."""
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=indent, ensure_ascii=False, default=_json_default)


def format_date(fmt: str = "%Y-%m-%dT%H:%M:%S") -> str:
    """Current local time, used to stamp artifacts."""
    return datetime.now().strftime(fmt)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def artifact_stamp(config_hash: str, testset_hash: str | None = None, **extra: Any) -> dict[str, Any]:
    """Provenance fields embedded in every results artifact.

    Args:
        config_hash: Hash of the experiment config that produced the artifact
        testset_hash: Hash of the test set, if one was used
        **extra: Additional fields (mode, seed, ...)
    """
    stamp = {
        "config_hash": config_hash,
        "testset_hash": testset_hash,
        "code_version": __version__,
        "created": format_date(),
    }
    stamp.update(extra)
    return stamp


def write_table(frame: pd.DataFrame, path: Path, stamp: dict[str, Any]) -> Path:
    """Write ``frame`` as CSV with its provenance in a sibling ``*.meta.json``."""
    path = Path(path)
    ensure_dir(path.parent)
    frame.to_csv(path, index=False)
    save_json(stamp, path.with_suffix(".meta.json"))
    return path


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    desc: str | None = None,
) -> list[R]:
    """Map ``fn`` over ``items`` in order, in worker processes when ``workers > 1``.

    Results come back in input order regardless of completion order, so the
    output does not depend on the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, leave=False)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, leave=False))
