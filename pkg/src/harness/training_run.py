"""PPO training run of the meta-policy in one of the four modes.

A run owns the policy, the trainer and ``ppo.n_envs`` rollout workers, all
seeded from one root seed. Each update collects ``ppo.n_steps`` decisions
per worker, applies PPO and appends one metrics row. The test set is
evaluated every ``ppo.eval_every`` updates and the best policy so far is
kept next to the final one. Any failure writes a checkpoint before it
propagates.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.experiment import ExperimentConfig, config_hash, dump_experiment_config
from src.control.dual_mode import LqrDesigner, default_lqr_weights
from src.control.ocp_solver import OcpSolver
from src.errors import ConfigError, MetaMpcError
from src.plant.dynamics import STATE_DIM
from src.policy.meta_policy import MetaPolicy
from src.policy.params import PolicyMode
from src.training.buffer import TransitionRecord
from src.training.checkpoint import load_checkpoint, prefixed, restore_rng, save_checkpoint, unprefixed
from src.training.ppo import PpoTrainer, UpdateMetrics
from src.training.rollout import EpisodeResult, RolloutWorker, collect_parallel
from src.utils.helpers import artifact_stamp, ensure_dir, write_table

from .evaluation import evaluate
from .testset import TestSet

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "update", "env_steps", "wall_clock", "train_cost", "episodes", "recompute_fraction", "mean_horizon",
    "policy_loss", "value_loss", "grad_norm", "clip_fraction", "approx_kl", "skipped",
    "sigma_M", "sigma_ML", "alpha", "eval_cost",
    *(f"Q_{i}" for i in range(STATE_DIM)), "R_0",
]


def frame_skips_for(mode: PolicyMode, config: ExperimentConfig) -> tuple[int, ...]:
    """Per-episode frame-skip choices of a training mode."""
    if mode == PolicyMode.JOINT:
        return tuple(config.ppo.frame_skip)
    if mode == PolicyMode.HORIZON:
        return (config.ppo.horizon_frame_skip,)
    return (1,)


def run_directory(root: Path, mode: PolicyMode, seed: int) -> Path:
    return Path(root) / f"{PolicyMode(mode).value}_seed{seed}"


@dataclass
class TrainingRun:
    """One (mode, seed) training run writing into ``directory``.

    Attributes:
        config: Experiment configuration
        mode: Parameter groups being trained
        seed: Model seed
        directory: Output directory of checkpoints and metrics
        testset: Episodes for periodic evaluation (None disables it)
        threads: Rollout threads
    """
    config: ExperimentConfig
    mode: PolicyMode
    seed: int
    directory: Path
    testset: TestSet | None = None
    threads: int = 1
    metrics: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.mode = PolicyMode(self.mode)
        self.directory = ensure_dir(self.directory)
        streams = np.random.SeedSequence(self.seed).spawn(2 + self.config.ppo.n_envs)
        solver = OcpSolver.from_experiment(self.config)
        self.policy = MetaPolicy.from_experiment(self.config, default_lqr_weights(solver),
                                                 np.random.default_rng(streams[0]), mode=self.mode)
        A_s, B_s = solver.linearize_steady(np.zeros(STATE_DIM))
        self.designer = LqrDesigner(A_s, B_s, self.policy.lqr_weights)
        self.trainer = PpoTrainer(self.policy, self.designer, self.config.ppo, np.random.default_rng(streams[1]))
        self.workers = [
            RolloutWorker(self.config, self.policy, np.random.default_rng(stream), worker_id)
            for worker_id, stream in enumerate(streams[2:])
        ]
        self.frame_skips = frame_skips_for(self.mode, self.config)
        self.best_cost = np.inf
        self.wall_clock = 0.0
        self.stamp = artifact_stamp(config_hash(self.config), None if self.testset is None else self.testset.hash,
                                    mode=self.mode.value, seed=self.seed)

    @property
    def env_steps(self) -> int:
        return sum(worker.env_steps for worker in self.workers)

    # Checkpoints

    def checkpoint(self, name: str, **metadata) -> Path:
        arrays = self.policy.named_arrays()
        arrays.update(prefixed(self.trainer.optimizer.state_arrays(), "optim/"))
        for worker in self.workers:
            arrays.update(prefixed(worker.snapshot(), f"worker{worker.worker_id}/"))
        rngs = {"trainer": self.trainer.rng}
        rngs.update({f"worker{w.worker_id}": w.rng for w in self.workers})
        meta = {**self.stamp, "update": self.trainer.updates, "env_steps": self.env_steps,
                "best_cost": float(self.best_cost), "wall_clock": self.wall_clock, **metadata}
        return save_checkpoint(self.directory / f"{name}.npz", arrays, meta, rngs)

    def resume(self, path: Path) -> None:
        """Continue from a checkpoint of the same (config, mode, seed).

        Restores the policy, the optimizer moments, every generator and the
        running episode of every worker, so the following updates repeat
        those of the uninterrupted run. Metrics rows after the checkpoint
        are discarded.

        Raises:
            ConfigError: If the checkpoint belongs to another run
        """
        arrays, metadata, rng_states = load_checkpoint(path)
        expected = (self.stamp["config_hash"], self.mode.value, self.seed)
        if (metadata.get("config_hash"), metadata.get("mode"), metadata.get("seed")) != expected:
            raise ConfigError(f"{path} was not written by {self.mode.value} seed {self.seed} under this config")
        self.policy.load_arrays(arrays)
        self.trainer.optimizer.load_arrays(unprefixed(arrays, "optim/"))
        self.trainer.updates = int(metadata["update"])
        self.trainer.rng = restore_rng(rng_states["trainer"])
        for worker in self.workers:
            worker.rng = restore_rng(rng_states[f"worker{worker.worker_id}"])
            worker.restore(unprefixed(arrays, f"worker{worker.worker_id}/"))
        self.best_cost = float(metadata.get("best_cost", np.inf))
        self.wall_clock = float(metadata.get("wall_clock", 0.0))
        metrics_path = self.directory / "metrics.csv"
        if metrics_path.exists():
            rows = pd.read_csv(metrics_path).to_dict("records")
            self.metrics = [row for row in rows if row["update"] <= self.trainer.updates]
        logger.info("resumed %s seed %d at update %d (%d env steps)",
                    self.mode.value, self.seed, self.trainer.updates, self.env_steps)

    # Training loop

    def _metrics_row(self, update: UpdateMetrics, records: list[TransitionRecord],
                     finished: list[EpisodeResult], eval_cost: float) -> dict:
        computed = [r.n for r in records if r.c == 1]
        if finished:
            fraction = sum(e.computed_steps for e in finished) / sum(e.steps for e in finished)
        else:
            fraction = float(np.mean([r.c for r in records]))
        weights = self.policy.lqr_weights
        row = {
            "update": self.trainer.updates,
            "env_steps": self.env_steps,
            "wall_clock": self.wall_clock,
            "train_cost": float(np.mean([e.cost for e in finished])) if finished else np.nan,
            "episodes": len(finished),
            "recompute_fraction": fraction,
            "mean_horizon": float(np.mean(computed)) if computed else np.nan,
            **{k: v for k, v in update.to_dict().items() if k != "n_samples"},
            "sigma_M": self.policy.sigma_M,
            "sigma_ML": self.policy.sigma_ML,
            "alpha": self.policy.alpha,
            "eval_cost": eval_cost,
        }
        row.update({f"Q_{i}": float(q) for i, q in enumerate(np.diag(weights.Q))})
        row["R_0"] = float(weights.R[0, 0])
        return row

    def _evaluate(self) -> float:
        eval_seed = self.config.experiment.eval_seeds[0]
        report = evaluate(self.config, self.policy, self.testset, eval_seeds=(eval_seed,),
                          artifacts_dir=self.directory / "eval" / f"update{self.trainer.updates:05d}")
        cost = report.mean_cost
        if cost < self.best_cost:
            self.best_cost = cost
            self.checkpoint("best", eval_cost=cost)
            logger.info("new best policy at update %d: cost %.3f", self.trainer.updates, cost)
        return cost

    def step(self) -> dict:
        """Collect one buffer, apply one PPO update and record its metrics row."""
        started = time.perf_counter()
        ppo = self.config.ppo
        buffer = collect_parallel(self.workers, ppo.n_steps, self.frame_skips, ppo.gamma, ppo.gae_lambda,
                                  threads=self.threads)
        records = buffer.records
        update = self.trainer.update(records)
        finished = [episode for worker in self.workers for episode in worker.pop_finished()]
        self.wall_clock += time.perf_counter() - started

        eval_cost = np.nan
        if self.testset is not None and self.trainer.updates % ppo.eval_every == 0:
            eval_cost = self._evaluate()
        if self.trainer.updates % ppo.checkpoint_every == 0:
            self.checkpoint("latest")
        row = self._metrics_row(update, records, finished, eval_cost)
        self.metrics.append(row)
        return row

    def run(self, total_steps: int | None = None) -> pd.DataFrame:
        """Train until ``total_steps`` plant steps; returns the metrics table.

        Raises:
            MetaMpcError: After writing ``failure.npz``
        """
        total = self.config.ppo.total_steps if total_steps is None else int(total_steps)
        dump_experiment_config(self.config, self.directory / "config.yaml")
        progress = tqdm(total=total, desc=f"train {self.mode.value} seed {self.seed}", leave=False)
        try:
            while self.env_steps < total:
                before = self.env_steps
                row = self.step()
                progress.update(self.env_steps - before)
                logger.info("update %d: %d steps, train cost %.2f, recompute %.2f",
                            row["update"], row["env_steps"], row["train_cost"], row["recompute_fraction"])
                self.save_metrics()
        except MetaMpcError as exc:
            path = self.checkpoint("failure", error=f"{type(exc).__name__}: {exc}")
            logger.error("training failed at update %d, state saved to %s", self.trainer.updates, path)
            raise
        finally:
            progress.close()
        if self.testset is not None and self.metrics and not np.isfinite(self.metrics[-1]["eval_cost"]):
            self.metrics[-1]["eval_cost"] = self._evaluate()
        self.checkpoint("final")
        self.save_metrics()
        return self.metrics_frame()

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.metrics, columns=METRIC_COLUMNS)

    def save_metrics(self) -> Path:
        return write_table(self.metrics_frame(), self.directory / "metrics.csv", self.stamp)


def train(
    config: ExperimentConfig,
    mode: PolicyMode,
    seeds: tuple[int, ...],
    output_dir: Path,
    testset: TestSet | None = None,
    total_steps: int | None = None,
    threads: int = 1,
    resume: bool = False,
) -> dict[int, pd.DataFrame]:
    """Train one policy per model seed; returns the metrics table of each seed.

    With ``resume``, a seed whose directory holds ``latest.npz`` continues from it.
    """
    tables = {}
    for seed in seeds:
        run = TrainingRun(config, mode, seed, run_directory(output_dir, mode, seed), testset, threads)
        latest = run.directory / "latest.npz"
        if resume and latest.exists():
            run.resume(latest)
        tables[seed] = run.run(total_steps)
    return tables
