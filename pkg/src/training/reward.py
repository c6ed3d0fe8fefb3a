"""Per-step reward: control performance, constraint penalty and computation penalty."""

from dataclasses import asdict, dataclass

from config.experiment import RewardConfig


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward components of one plant step; ``total`` is their sum."""
    control: float       # -stage cost
    constraint: float    # lambda_h * (T - t) on violation
    computation: float   # -lambda_c * N on a computing step

    @property
    def total(self) -> float:
        return self.control + self.constraint + self.computation

    @property
    def cost(self) -> float:
        return -self.total

    def to_dict(self) -> dict:
        return {**asdict(self), "total": self.total}


def horizon_cost(horizon: int) -> float:
    """Computational cost of one OCP solve, linear in the horizon."""
    return float(horizon)


def reward(
    stage_cost: float,
    violated: bool,
    computed: bool,
    horizon: int,
    t: int,
    episode_length: int,
    config: RewardConfig,
) -> RewardBreakdown:
    """Reward of step ``t``.

    Args:
        stage_cost: Stage cost of the state reached by the step
        violated: Whether the reached state violates the position bound
        computed: Whether the OCP was solved at this step
        horizon: Horizon of that solve
        t: Index of the step within the episode
        episode_length: T
        config: Reward weights
    """
    constraint = config.lambda_h * (episode_length - t) if violated else 0.0
    computation = -config.lambda_c * horizon_cost(horizon) if computed else 0.0
    return RewardBreakdown(control=-float(stage_cost), constraint=float(constraint), computation=float(computation))
