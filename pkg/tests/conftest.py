"""Shared fixtures for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from config.experiment import ExperimentConfig, parse_experiment_config  # noqa: E402
from src.control.dual_mode import LqrDesigner  # noqa: E402
from src.control.ocp_solver import OcpSolver  # noqa: E402
from src.control.riccati import LqrWeights  # noqa: E402
from src.plant.dynamics import PendulumParams  # noqa: E402

SMALL_CONFIG = {
    "episode": {"horizon": 20, "reference_period": 10},
    "mpc": {"n_max": 12, "max_iter": 100},
    "policy": {"n_init": 8.0, "head_hidden": [8, 8], "value_hidden": [16], "normalizer_warmup": 200},
    "ppo": {
        "n_steps": 8, "n_envs": 2, "n_epochs": 2, "frame_skip": [1, 2], "horizon_frame_skip": 2,
        "total_steps": 40, "checkpoint_every": 1, "eval_every": 2,
    },
    "experiment": {"seeds": [0], "eval_seeds": [100, 101], "test_set_size": 3},
    "sweep": {"horizons": [4, 8], "schedules": [1, 2], "reference_horizon": 8},
}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: closed-loop tests that run the OCP solver")
    config.addinivalue_line("markers", "acceptance: desk-scale training and sweep runs, selected with -m acceptance")


def pytest_collection_modifyitems(config, items):
    if "acceptance" in (config.getoption("-m") or ""):
        return
    skip = pytest.mark.skip(reason="desk-scale run, select with -m acceptance")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def plant_params() -> PendulumParams:
    return PendulumParams()


@pytest.fixture
def model_params() -> PendulumParams:
    return PendulumParams(m=0.2, M=1.5)


@pytest.fixture
def experiment_config() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture
def small_config() -> ExperimentConfig:
    """Short episodes, short horizons and tiny networks."""
    return parse_experiment_config(SMALL_CONFIG)


@pytest.fixture
def ocp_solver(model_params) -> OcpSolver:
    return OcpSolver(model=model_params, n_max=40)


@pytest.fixture
def lqr_weights() -> LqrWeights:
    return LqrWeights.from_matrices(np.diag([20.0, 1.5, 2.0, 0.05]), np.array([[0.2]]))


def random_stable_pair(rng: np.random.Generator, n: int = 4, m: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """A generic controllable (A, B) close to a sampled-data system."""
    A = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    B = 0.1 * rng.standard_normal((n, m))
    return A, B


@pytest.fixture
def designer(lqr_weights) -> LqrDesigner:
    A, B = random_stable_pair(np.random.default_rng(7))
    return LqrDesigner(A, B, lqr_weights)
