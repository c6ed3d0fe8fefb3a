"""Tests for checkpoint archives."""

import numpy as np
import pytest

from src.errors import ConfigError
from src.training.checkpoint import load_checkpoint, restore_rng, save_checkpoint


def test_arrays_metadata_and_rngs_survive(tmp_path):
    rng = np.random.default_rng(42)
    rng.standard_normal(10)
    arrays = {"policy/theta_c": np.arange(5.0), "optim/t": np.array([3.0])}
    path = save_checkpoint(tmp_path / "run" / "latest.npz", arrays, {"mode": "joint", "update": 7}, {"trainer": rng})

    loaded, metadata, rng_states = load_checkpoint(path)
    assert set(loaded) == set(arrays)
    np.testing.assert_array_equal(loaded["policy/theta_c"], arrays["policy/theta_c"])
    assert metadata == {"mode": "joint", "update": 7}
    restored = restore_rng(rng_states["trainer"])
    np.testing.assert_array_equal(restored.standard_normal(5), rng.standard_normal(5))


def test_arrays_are_little_endian_float64(tmp_path):
    path = save_checkpoint(tmp_path / "c.npz", {"x": np.arange(3, dtype=np.int32)}, {})
    with np.load(path, allow_pickle=False) as archive:
        assert archive["x"].dtype == np.dtype("<f8")
    assert not (tmp_path / "c.tmp.npz").exists()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "nothing.npz")


def test_foreign_archive(tmp_path):
    path = tmp_path / "foreign.npz"
    np.savez(path, x=np.zeros(2))
    with pytest.raises(ConfigError):
        load_checkpoint(path)
