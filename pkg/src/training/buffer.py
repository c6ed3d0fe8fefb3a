"""Rollout storage and generalized advantage estimation."""

from dataclasses import dataclass, field

import numpy as np

from src.control.dual_mode import LqrPlan


@dataclass
class TransitionRecord:
    """One recorded decision (a macro step when frame-skip holds the action).

    Attributes:
        features: Normalized augmented-state features at decision time
        raw_features: The same features before normalization
        c, n, u: Recompute flag, horizon term and sampled input
        mean_M: u_M mean (constant: the MPC tunables are not trained)
        plan: LQR plan the u_ML mean was computed from (c = 0)
        offset: Steps since that plan's computation
        feedforward: Stored MPC input at ``offset``
        error: State error the LQR acted on
        log_prob: Log-probability under the behaviour policy
        value: Value estimate at decision time
        reward: Reward summed over the held steps
        terminated: Episode ended on a constraint violation
        truncated: Episode ended at T, or the rollout was cut after this record
        bootstrap_value: V of the next decision state (0 when terminated)
    """
    features: np.ndarray
    raw_features: np.ndarray
    c: int
    n: int
    u: float
    mean_M: float
    plan: LqrPlan | None
    offset: int
    feedforward: float
    error: np.ndarray
    log_prob: float
    value: float
    reward: float = 0.0
    terminated: bool = False
    truncated: bool = False
    bootstrap_value: float = 0.0
    advantage: float = 0.0
    ret: float = 0.0

    @property
    def segment_end(self) -> bool:
        return self.terminated or self.truncated


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Advantages of one uninterrupted segment.

    Args:
        rewards: R_0 .. R_{T-1}
        values: V(s_0) .. V(s_T), the last entry being the bootstrap value
            (0 for a terminal state)
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ValueError("values must hold one bootstrap entry more than rewards")
    deltas = rewards + gamma * values[1:] - values[:-1]
    advantages = np.empty_like(deltas)
    running = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages


def split_segments(records: list[TransitionRecord]) -> list[list[TransitionRecord]]:
    segments, current = [], []
    for record in records:
        current.append(record)
        if record.segment_end:
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments


@dataclass
class RolloutBuffer:
    """Per-actor record lists; advantages are computed per uninterrupted segment."""
    n_actors: int
    gamma: float = 0.99
    gae_lambda: float = 0.9
    actors: list[list[TransitionRecord]] = field(default_factory=list)

    def __post_init__(self):
        if not self.actors:
            self.actors = [[] for _ in range(self.n_actors)]

    def add(self, actor: int, record: TransitionRecord) -> None:
        self.actors[actor].append(record)

    def extend(self, actor: int, records: list[TransitionRecord]) -> None:
        self.actors[actor].extend(records)

    def __len__(self) -> int:
        return sum(len(records) for records in self.actors)

    @property
    def records(self) -> list[TransitionRecord]:
        return [record for records in self.actors for record in records]

    def compute_advantages(self) -> None:
        """Fill ``advantage`` and ``ret`` of every record.

        A segment that ends without ``segment_end`` set (a rollout cut short)
        is bootstrapped from its last record's ``bootstrap_value``.
        """
        for records in self.actors:
            for segment in split_segments(records):
                last = segment[-1]
                bootstrap = 0.0 if last.terminated else last.bootstrap_value
                values = np.array([r.value for r in segment] + [bootstrap])
                advantages = gae(np.array([r.reward for r in segment]), values, self.gamma, self.gae_lambda)
                for record, advantage in zip(segment, advantages):
                    record.advantage = float(advantage)
                    record.ret = float(advantage + record.value)

    def clear(self) -> None:
        self.actors = [[] for _ in range(self.n_actors)]
