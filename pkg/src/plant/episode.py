"""Episode lifecycle of the pendulum plant: sampling, stepping, traces."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .dynamics import (
    PendulumParams,
    StageCostWeights,
    check_constraints,
    clamp_input,
    rk4_step,
    stage_cost,
)

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "psi", "v", "phi", "omega", "u", "psi_r", "cost", "computed_flag", "horizon"]
INTEGER_TRACE_COLUMNS = ("step", "computed_flag", "horizon")


class EpisodeConfig(BaseModel):
    """Episode protocol."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    horizon: int = Field(150, gt=0, description="Episode length T in steps")
    reference_period: int = Field(50, gt=0, description="Steps between reference redraws")
    position_limit: float = Field(2.0, gt=0.0, description="|psi| bound (m)")
    input_limit: float = Field(5.0, gt=0.0, description="|u| bound (N)")
    seed: int | None = Field(None, description="Default rng seed for ad-hoc episodes")


def sample_initial(rng: np.random.Generator) -> np.ndarray:
    """Initial state [0, U(-1,1), U(-pi,pi), U(-1,1)]."""
    v, phi, omega = rng.uniform(-1.0, 1.0), rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)
    return np.array([0.0, v, phi, omega], dtype=np.float64)


def sample_reference(rng: np.random.Generator) -> float:
    return float(rng.uniform(-1.0, 1.0))


def sample_reference_schedule(rng: np.random.Generator, config: EpisodeConfig) -> np.ndarray:
    """Per-step reference, redrawn every ``reference_period`` steps."""
    n_draws = -(-config.horizon // config.reference_period)
    draws = [sample_reference(rng) for _ in range(n_draws)]
    return np.repeat(np.asarray(draws), config.reference_period)[: config.horizon]


@dataclass
class StepOutcome:
    """Result of one plant step."""
    state: np.ndarray
    u: float
    cost: float
    violated: bool
    truncated: bool
    t: int  # index of the step just taken

    @property
    def done(self) -> bool:
        return self.violated or self.truncated


@dataclass
class PendulumEnv:
    """Single pendulum episode holder with an instance-local trace.

    Attributes:
        params: Ground-truth plant parameters
        config: Episode protocol
        weights: Stage-cost weights used for the step cost
    """
    params: PendulumParams
    config: EpisodeConfig = field(default_factory=EpisodeConfig)
    weights: StageCostWeights = field(default_factory=StageCostWeights)

    def __post_init__(self):
        self.state = np.zeros(4)
        self.references = np.zeros(self.config.horizon)
        self.t = 0
        self.u_prev = 0.0
        self.done = True
        self._trace: list[dict] = []

    def reset(self, initial_state: np.ndarray, references: np.ndarray) -> np.ndarray:
        """Start an episode from a given state and reference schedule."""
        references = np.asarray(references, dtype=np.float64)
        if references.shape != (self.config.horizon,):
            raise ValueError(f"reference schedule must have {self.config.horizon} entries")
        self.state = np.array(initial_state, dtype=np.float64)
        self.references = references
        self.t = 0
        self.u_prev = 0.0
        self.done = False
        self._trace = []
        return self.state.copy()

    def reset_random(self, rng: np.random.Generator) -> np.ndarray:
        x0 = sample_initial(rng)
        return self.reset(x0, sample_reference_schedule(rng, self.config))

    @property
    def psi_r(self) -> float:
        """Reference active at the current step."""
        return float(self.references[min(self.t, self.config.horizon - 1)])

    def step(self, u: float, computed: bool = False, horizon: int = 0) -> StepOutcome:
        """Apply a clamped input for one period and score the resulting state."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        u = clamp_input(u, self.config.input_limit)
        psi_r = self.psi_r
        x_next = rk4_step(self.state, u, self.params)
        cost = stage_cost(x_next, u, self.u_prev, psi_r, self.params, self.weights)
        violated = check_constraints(x_next, u, self.config.position_limit).position_violation
        self._trace.append({
            "step": self.t, "psi": self.state[0], "v": self.state[1], "phi": self.state[2],
            "omega": self.state[3], "u": u, "psi_r": psi_r, "cost": cost,
            "computed_flag": int(computed), "horizon": int(horizon),
        })
        outcome = StepOutcome(
            state=x_next.copy(), u=u, cost=cost, violated=violated,
            truncated=(not violated and self.t + 1 >= self.config.horizon), t=self.t,
        )
        if violated:
            logger.debug("position constraint violated at step %d (psi=%.3f)", self.t, x_next[0])
        self.state = x_next
        self.u_prev = u
        self.t += 1
        self.done = outcome.done
        return outcome

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._trace, columns=TRACE_COLUMNS)

    def export_trace(self, path: Path) -> Path:
        """Write the episode trace CSV."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.trace_frame().to_csv(path, index=False)
        return path

    def snapshot(self) -> dict[str, np.ndarray]:
        """Float arrays from which ``restore`` rebuilds the running episode, trace included."""
        return {
            "state": self.state.copy(),
            "references": self.references.copy(),
            "clock": np.array([self.t, self.u_prev, float(self.done)]),
            "trace": self.trace_frame().to_numpy(dtype=np.float64).reshape(-1, len(TRACE_COLUMNS)),
        }

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        self.state = np.array(arrays["state"], dtype=np.float64)
        self.references = np.array(arrays["references"], dtype=np.float64)
        t, u_prev, done = arrays["clock"]
        self.t, self.u_prev, self.done = int(t), float(u_prev), bool(done)
        self._trace = [
            {name: int(v) if name in INTEGER_TRACE_COLUMNS else float(v) for name, v in zip(TRACE_COLUMNS, row)}
            for row in np.asarray(arrays["trace"], dtype=np.float64)
        ]
