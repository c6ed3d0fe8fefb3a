"""Rewards, rollouts, advantage estimation, PPO updates and checkpoints."""

from .buffer import RolloutBuffer, TransitionRecord, gae
from .checkpoint import load_checkpoint, restore_rng, save_checkpoint
from .ppo import Adam, PpoTrainer, UpdateMetrics, clipped_surrogate, lqr_branch_means
from .reward import RewardBreakdown, reward
from .rollout import EpisodeResult, RolloutWorker, collect_parallel

__all__ = [
    "RolloutBuffer",
    "TransitionRecord",
    "gae",
    "load_checkpoint",
    "restore_rng",
    "save_checkpoint",
    "Adam",
    "PpoTrainer",
    "UpdateMetrics",
    "clipped_surrogate",
    "lqr_branch_means",
    "RewardBreakdown",
    "reward",
    "EpisodeResult",
    "RolloutWorker",
    "collect_parallel",
]
