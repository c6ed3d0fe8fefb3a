"""Portable checkpoint archives: named little-endian float64 arrays plus JSON metadata."""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from src.errors import ConfigError

logger = logging.getLogger(__name__)

METADATA_KEY = "meta/json"
RNG_PREFIX = "rng/"


def _encode_json(payload: Any) -> np.ndarray:
    return np.frombuffer(json.dumps(payload, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def _decode_json(array: np.ndarray) -> Any:
    return json.loads(bytes(np.asarray(array, dtype=np.uint8)).decode("utf-8"))


def save_checkpoint(
    path: Path,
    arrays: dict[str, np.ndarray],
    metadata: dict[str, Any],
    rngs: dict[str, np.random.Generator] | None = None,
) -> Path:
    """Write ``arrays`` (slash-separated names) as ``<f8`` with metadata and rng states.

    Args:
        path: Target ``.npz`` file
        arrays: Named numeric arrays
        metadata: JSON-serializable run information
        rngs: Generators whose bit-generator states are stored for exact resume
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {name: np.asarray(value, dtype="<f8") for name, value in arrays.items()}
    payload[METADATA_KEY] = _encode_json(metadata)
    for name, rng in (rngs or {}).items():
        payload[RNG_PREFIX + name] = _encode_json(rng.bit_generator.state)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **payload)
    tmp.replace(path)
    logger.debug("checkpoint written to %s (%d arrays)", path, len(arrays))
    return path


def load_checkpoint(path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any], dict[str, dict]]:
    """Read a checkpoint without unpickling.

    Returns:
        (arrays, metadata, rng states by name)

    Raises:
        ConfigError: If the file is missing or not a checkpoint
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    arrays, rng_states = {}, {}
    metadata: dict[str, Any] = {}
    with np.load(path, allow_pickle=False) as archive:
        if METADATA_KEY not in archive.files:
            raise ConfigError(f"{path} is not a checkpoint archive")
        for name in archive.files:
            if name == METADATA_KEY:
                metadata = _decode_json(archive[name])
            elif name.startswith(RNG_PREFIX):
                rng_states[name[len(RNG_PREFIX):]] = _decode_json(archive[name])
            else:
                arrays[name] = np.asarray(archive[name], dtype=np.float64)
    return arrays, metadata, rng_states


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.Generator(getattr(np.random, state["bit_generator"])())
    rng.bit_generator.state = state
    return rng


def prefixed(arrays: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}{name}": value for name, value in arrays.items()}


def unprefixed(arrays: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    """Entries under ``prefix`` with the prefix removed."""
    return {name[len(prefix):]: value for name, value in arrays.items() if name.startswith(prefix)}
