"""Ground-truth pendulum simulation and episode handling."""

from .dynamics import (
    PendulumParams,
    PlantState,
    StageCostWeights,
    check_constraints,
    clamp_input,
    derivatives,
    rk4_step,
    stage_cost,
    step,
)
from .episode import EpisodeConfig, PendulumEnv, sample_initial, sample_reference, sample_reference_schedule

__all__ = [
    "PendulumParams",
    "PlantState",
    "StageCostWeights",
    "check_constraints",
    "clamp_input",
    "derivatives",
    "rk4_step",
    "stage_cost",
    "step",
    "EpisodeConfig",
    "PendulumEnv",
    "sample_initial",
    "sample_reference",
    "sample_reference_schedule",
]
