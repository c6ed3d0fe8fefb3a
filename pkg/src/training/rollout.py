"""Closed-loop episodes of the event-triggered controller, for training and evaluation.

An episode starts with a deterministic computation at the policy's initial
horizon (not recorded, but its reward counts). Every later decision may be held for
``frame_skip`` steps: held steps repeat ``(c, N)`` with the branch mean as
input and their rewards are summed into the decision's record.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from config.experiment import ExperimentConfig
from src.control.ocp_solver import OcpSolver
from src.plant.episode import PendulumEnv, sample_initial, sample_reference_schedule
from src.policy.controller import ControlStep, DecisionSource, MetaController
from src.policy.meta_policy import MetaPolicy
from src.policy.state import AugmentedState, transition_bookkeeping

from .buffer import RolloutBuffer, TransitionRecord
from .checkpoint import prefixed, unprefixed
from .reward import RewardBreakdown, reward

logger = logging.getLogger(__name__)


@dataclass
class EpisodeResult:
    """Summed reward components and computation statistics of one episode."""
    control: float = 0.0
    constraint: float = 0.0
    computation: float = 0.0
    steps: int = 0
    computed_steps: int = 0
    violated: bool = False
    ocp_time: float = 0.0
    overhead_time: float = 0.0
    frame_skip: int = 1
    trace: pd.DataFrame | None = None

    @property
    def total_reward(self) -> float:
        return self.control + self.constraint + self.computation

    @property
    def cost(self) -> float:
        return -self.total_reward

    @property
    def control_cost(self) -> float:
        return -self.control

    @property
    def computation_cost(self) -> float:
        return -self.computation

    @property
    def recompute_fraction(self) -> float:
        return self.computed_steps / self.steps if self.steps else 0.0

    def add(self, breakdown: RewardBreakdown, computed: bool) -> None:
        self.control += breakdown.control
        self.constraint += breakdown.constraint
        self.computation += breakdown.computation
        self.steps += 1
        self.computed_steps += int(computed)

    def horizons(self) -> np.ndarray:
        """Horizons of every computation, the start-of-episode one included."""
        if self.trace is None:
            return np.array([], dtype=int)
        return self.trace.loc[self.trace["computed_flag"] == 1, "horizon"].to_numpy()

    def computation_gaps(self) -> np.ndarray:
        """Steps between consecutive computations."""
        if self.trace is None:
            return np.array([], dtype=int)
        return np.diff(self.trace.loc[self.trace["computed_flag"] == 1, "step"].to_numpy())

    def counters(self) -> np.ndarray:
        return np.array([self.control, self.constraint, self.computation, self.steps, self.computed_steps,
                         float(self.violated), self.frame_skip])

    @classmethod
    def from_counters(cls, counters: np.ndarray) -> "EpisodeResult":
        control, constraint, computation, steps, computed_steps, violated, frame_skip = counters
        return cls(control=float(control), constraint=float(constraint), computation=float(computation),
                   steps=int(steps), computed_steps=int(computed_steps), violated=bool(violated),
                   frame_skip=int(frame_skip))

    def summary(self) -> dict:
        return {
            "cost": self.cost,
            "control_cost": self.control_cost,
            "constraint_cost": -self.constraint,
            "computation_cost": self.computation_cost,
            "steps": self.steps,
            "computed_steps": self.computed_steps,
            "recompute_fraction": self.recompute_fraction,
            "violated": self.violated,
            "ocp_time": self.ocp_time,
            "overhead_time": self.overhead_time,
            "frame_skip": self.frame_skip,
        }


@dataclass
class _Episode:
    env: PendulumEnv
    s: AugmentedState
    result: EpisodeResult
    frame_skip: int
    done: bool = False


class RolloutWorker:
    """One actor: environment, OCP solver, controller and rng.

    Attributes:
        config: Experiment configuration
        policy: Shared policy (only read during rollouts)
        rng: Worker-local generator
        worker_id: Index of the actor
        env_steps: Plant steps taken so far, evaluation episodes included
    """

    def __init__(self, config: ExperimentConfig, policy: DecisionSource | MetaPolicy, rng: np.random.Generator,
                 worker_id: int = 0, record_diagnostics: bool = False):
        self.config = config
        self.policy = policy
        self.rng = rng
        self.worker_id = worker_id
        self.solver = OcpSolver.from_experiment(config, record_diagnostics=record_diagnostics)
        self.controller = MetaController.build(self.solver, policy.lqr_weights, config.episode.input_limit)
        self._episode: _Episode | None = None
        self.finished: list[EpisodeResult] = []
        self.env_steps = 0

    # Episode mechanics

    def _start(self, x0: np.ndarray, references: np.ndarray, frame_skip: int) -> _Episode:
        env = PendulumEnv(self.config.plant, self.config.episode, self.config.cost)
        env.reset(x0, references)
        s, step = self.controller.begin_episode(env.state, env.psi_r, self.policy.lqr_weights, env.u_prev,
                                                horizon=self.policy.initial_horizon)
        episode = _Episode(env=env, s=s, result=EpisodeResult(frame_skip=frame_skip), frame_skip=frame_skip)
        self._apply(episode, step, step.action.n)
        return episode

    def _apply(self, episode: _Episode, step: ControlStep, horizon: int) -> RewardBreakdown:
        """Execute one control period on the plant and advance the augmented state."""
        env = episode.env
        outcome = env.step(step.action.u_executed, computed=step.computed, horizon=horizon if step.computed else 0)
        breakdown = reward(outcome.cost, outcome.violated, step.computed, horizon, outcome.t,
                           self.config.episode.horizon, self.config.reward)
        episode.result.add(breakdown, step.computed)
        self.env_steps += 1
        episode.s = transition_bookkeeping(episode.s, step.action, outcome.state, env.psi_r)
        if outcome.done:
            episode.done = True
            episode.result.violated = outcome.violated
        return breakdown

    def _decision(self, episode: _Episode, deterministic: bool) -> tuple[ControlStep, float]:
        """One (possibly held) decision; returns its first step and the summed reward."""
        env = episode.env
        s = episode.s
        step = self.controller.act(self.policy, s, self.rng, env.u_prev, deterministic, env.t)
        c, n = step.action.c, step.action.n
        total = self._apply(episode, step, n).total
        for _ in range(episode.frame_skip - 1):
            if episode.done:
                break
            held = self.controller.execute(episode.s, c, n, env.u_prev, env.t)
            total += self._apply(episode, held, n).total
        return step, total

    def _finish(self, episode: _Episode) -> EpisodeResult:
        result = episode.result
        result.ocp_time = self.controller.timing.ocp
        result.overhead_time = self.controller.timing.overhead
        result.trace = episode.env.trace_frame()
        return result

    # Evaluation

    def run_episode(self, x0: np.ndarray, references: np.ndarray, deterministic: bool = True,
                    frame_skip: int = 1, trace_path: Path | None = None) -> EpisodeResult:
        """Run a full episode without recording transitions, writing its trace CSV to ``trace_path`` if given."""
        episode = self._start(x0, references, frame_skip)
        while not episode.done:
            self._decision(episode, deterministic)
        if trace_path is not None:
            episode.env.export_trace(trace_path)
        return self._finish(episode)

    # Training

    def _new_training_episode(self, frame_skips: tuple[int, ...]) -> _Episode:
        frame_skip = int(self.rng.choice(frame_skips))
        x0 = sample_initial(self.rng)
        return self._start(x0, sample_reference_schedule(self.rng, self.config.episode), frame_skip)

    def collect(self, n_records: int, frame_skips: tuple[int, ...]) -> list[TransitionRecord]:
        """Collect ``n_records`` decisions, continuing the running episode across calls."""
        self.controller.refresh_weights(self.policy.lqr_weights)
        records: list[TransitionRecord] = []
        while len(records) < n_records:
            if self._episode is None or self._episode.done:
                self._episode = self._new_training_episode(frame_skips)
                if self._episode.done:
                    self.finished.append(self._finish(self._episode))
                    continue
            episode = self._episode
            step, total = self._decision(episode, deterministic=False)
            decision = step.decision
            record = TransitionRecord(
                features=decision.features,
                raw_features=decision.raw_features,
                c=step.action.c,
                n=step.action.n,
                u=step.action.u_sampled,
                mean_M=step.action.mean if step.action.c == 1 else 0.0,
                plan=None if step.action.c == 1 else step.plan,
                offset=step.offset,
                feedforward=step.feedforward,
                error=step.error,
                log_prob=step.action.log_prob,
                value=decision.value,
                reward=total,
                terminated=episode.done and episode.result.violated,
                truncated=episode.done and not episode.result.violated,
            )
            if not record.terminated:
                features, _ = self.policy.features(episode.s)
                record.bootstrap_value = float(self.policy.value(features)[0])
            records.append(record)
            if episode.done:
                self.finished.append(self._finish(episode))
        return records

    def pop_finished(self) -> list[EpisodeResult]:
        finished, self.finished = self.finished, []
        return finished

    # Checkpointing

    def snapshot(self) -> dict[str, np.ndarray]:
        """Step count, controller plan and the running episode, if any."""
        arrays = {"env_steps": np.array([self.env_steps])}
        arrays.update(prefixed(self.controller.snapshot(), "controller/"))
        episode = self._episode
        if episode is not None and not episode.done:
            arrays.update(prefixed(episode.env.snapshot(), "env/"))
            arrays["augmented_state"] = episode.s.features()
            arrays["result"] = episode.result.counters()
        return arrays

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        """Continue from ``snapshot`` output; finished episodes are dropped."""
        self.env_steps = int(arrays["env_steps"][0])
        self.controller.restore(unprefixed(arrays, "controller/"), self.policy.lqr_weights)
        self.finished = []
        self._episode = None
        if "augmented_state" in arrays:
            env = PendulumEnv(self.config.plant, self.config.episode, self.config.cost)
            env.restore(unprefixed(arrays, "env/"))
            result = EpisodeResult.from_counters(arrays["result"])
            self._episode = _Episode(env=env, s=AugmentedState.from_features(arrays["augmented_state"]),
                                     result=result, frame_skip=result.frame_skip)


def collect_parallel(
    workers: list[RolloutWorker],
    n_records: int,
    frame_skips: tuple[int, ...],
    gamma: float,
    gae_lambda: float,
    threads: int = 1,
) -> RolloutBuffer:
    """Fill a buffer with ``n_records`` per worker; the fixed worker order keeps it deterministic."""
    buffer = RolloutBuffer(n_actors=len(workers), gamma=gamma, gae_lambda=gae_lambda)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(lambda w: w.collect(n_records, frame_skips), workers))
    else:
        batches = [worker.collect(n_records, frame_skips) for worker in workers]
    for actor, records in enumerate(batches):
        buffer.extend(actor, records)
    buffer.compute_advantages()
    return buffer
