"""Exploitation-mode evaluation of a policy checkpoint on the test set.

The recompute head stays stochastic, the horizon is the rounded mean and
both input branches execute their means. Every episode of every evaluation
seed gets its own generator derived from (eval seed, episode seed), so
results do not depend on episode order or worker count.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from config.experiment import ExperimentConfig, config_hash
from src.control.ocp_solver import OcpSolver
from src.control.dual_mode import default_lqr_weights
from src.control.riccati import LqrWeights
from src.plant.dynamics import STATE_DIM
from src.policy.meta_policy import MetaPolicy
from src.policy.params import PolicyMode
from src.training.checkpoint import load_checkpoint
from src.training.rollout import EpisodeResult, RolloutWorker
from src.utils.helpers import artifact_stamp, ensure_dir, parallel_map, save_json

from .testset import TestSet

logger = logging.getLogger(__name__)

REPORT_TERMS = ("cost", "control_cost", "constraint_cost", "computation_cost")


def episode_rng(eval_seed: int, episode_seed: int) -> np.random.Generator:
    return np.random.default_rng([int(eval_seed), int(episode_seed)])


def run_testset(worker: RolloutWorker, testset: TestSet, eval_seed: int = 0,
                deterministic: bool = True, trace_dir: Path | None = None) -> list[EpisodeResult]:
    """Run every test-set episode with ``worker``'s policy, optionally writing one trace CSV each."""
    results = []
    for index, episode in enumerate(testset):
        worker.rng = episode_rng(eval_seed, episode.seed)
        trace_path = None if trace_dir is None else Path(trace_dir) / f"episode{index:03d}.csv"
        results.append(worker.run_episode(episode.x0, episode.reference_schedule, deterministic=deterministic,
                                          trace_path=trace_path))
    return results


def results_frame(results: list[EpisodeResult], **columns) -> pd.DataFrame:
    """One row per episode with the reward terms and computation statistics."""
    frame = pd.DataFrame([r.summary() for r in results])
    frame.insert(0, "episode", np.arange(len(results)))
    for name, value in columns.items():
        frame.insert(0, name, value)
    return frame


def histogram(values: np.ndarray, bins: np.ndarray) -> dict[str, list]:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return {"edges": edges.tolist(), "counts": counts.astype(int).tolist()}


@dataclass
class EvaluationReport:
    """Aggregate of exploitation runs over several evaluation seeds."""
    per_seed: pd.DataFrame
    horizons: np.ndarray
    gaps: np.ndarray
    n_max: int
    stamp: dict = field(default_factory=dict)

    @property
    def mean_cost(self) -> float:
        return float(self.seed_means()["cost"].mean())

    def seed_means(self) -> pd.DataFrame:
        """Test-set averages per evaluation seed."""
        numeric = self.per_seed.drop(columns=["episode"]).astype(float)
        return numeric.groupby("eval_seed").mean()

    def term_summary(self) -> dict[str, dict[str, float]]:
        means = self.seed_means()
        return {
            term: {"mean": float(means[term].mean()), "std": float(means[term].std(ddof=0))}
            for term in (*REPORT_TERMS, "recompute_fraction", "ocp_time", "overhead_time")
        }

    @property
    def recompute_fraction(self) -> float:
        return float(self.per_seed["computed_steps"].sum() / self.per_seed["steps"].sum())

    @property
    def violations(self) -> int:
        return int(self.per_seed["violated"].astype(bool).sum())

    def to_dict(self) -> dict:
        return {
            **self.stamp,
            "mean_cost": self.mean_cost,
            "terms": self.term_summary(),
            "recompute_fraction": self.recompute_fraction,
            "violations": self.violations,
            "processing_time": float(self.seed_means()[["ocp_time", "overhead_time"]].sum(axis=1).mean()),
            "horizon_histogram": histogram(self.horizons, np.arange(1, self.n_max + 2) - 0.5),
            "gap_histogram": histogram(self.gaps, np.arange(1, max(int(self.gaps.max(initial=1)), 1) + 2) - 0.5),
        }

    def save(self, directory: Path, name: str = "evaluation") -> Path:
        directory = ensure_dir(directory)
        self.per_seed.to_csv(directory / f"{name}_episodes.csv", index=False)
        path = directory / f"{name}.json"
        save_json(self.to_dict(), path)
        return path


def build_policy(config: ExperimentConfig, arrays: dict[str, np.ndarray] | None = None,
                 mode: PolicyMode = PolicyMode.JOINT, seed: int = 0) -> MetaPolicy:
    """A policy at its configured initialization, optionally overwritten by checkpoint arrays."""
    lqr_init = default_lqr_weights(OcpSolver.from_experiment(config))
    if arrays is not None and "lqr_init/params" in arrays:
        lqr_init = LqrWeights.from_params(arrays["lqr_init/params"], STATE_DIM, 1)
    policy = MetaPolicy.from_experiment(config, lqr_init, np.random.default_rng(seed), mode=mode)
    if arrays is not None:
        policy.load_arrays(arrays)
    return policy


def load_policy(config: ExperimentConfig, checkpoint: Path) -> MetaPolicy:
    """Policy stored in a checkpoint, in the mode it was trained in."""
    arrays, metadata, _ = load_checkpoint(checkpoint)
    mode = PolicyMode(metadata.get("mode", PolicyMode.JOINT.value))
    logger.info("loaded %s checkpoint %s (update %s)", mode.value, checkpoint, metadata.get("update"))
    return build_policy(config, arrays, mode=mode)


def seed_artifacts_dir(artifacts_dir: Path, eval_seed: int) -> Path:
    return Path(artifacts_dir) / f"seed{eval_seed}"


def _evaluate_seed(job: tuple[ExperimentConfig, MetaPolicy, TestSet, int, Path | None]) -> pd.DataFrame:
    config, policy, testset, eval_seed, artifacts_dir = job
    exports = config.experiment
    out = None if artifacts_dir is None else seed_artifacts_dir(artifacts_dir, eval_seed)
    worker = RolloutWorker(config, policy, np.random.default_rng(eval_seed),
                           record_diagnostics=out is not None and exports.export_solver_log)
    trace_dir = out / "traces" if out is not None and exports.export_traces else None
    results = run_testset(worker, testset, eval_seed, trace_dir=trace_dir)
    if worker.solver.record_diagnostics:
        worker.solver.export_diagnostics(out / "ocp_solves.csv")
    frame = results_frame(results, eval_seed=eval_seed)
    frame["horizons"] = [" ".join(map(str, r.horizons())) for r in results]
    frame["gaps"] = [" ".join(map(str, r.computation_gaps())) for r in results]
    return frame


def _split(column: pd.Series) -> np.ndarray:
    values = [int(v) for text in column for v in str(text).split()]
    return np.asarray(values, dtype=int)


def evaluate(
    config: ExperimentConfig,
    policy: MetaPolicy,
    testset: TestSet,
    eval_seeds: tuple[int, ...] | None = None,
    workers: int = 1,
    artifacts_dir: Path | None = None,
) -> EvaluationReport:
    """Exploitation runs of ``policy`` over the test set for each evaluation seed.

    Args:
        config: Experiment configuration
        policy: Policy to evaluate (not modified)
        testset: Episodes to run
        eval_seeds: Seeds of the stochastic recompute head; defaults to the config's
        workers: Processes, one evaluation seed each
        artifacts_dir: Root of per-seed episode traces and OCP solve logs, written
            when ``experiment.export_traces`` / ``experiment.export_solver_log`` are set

    Returns:
        Report with per-episode rows, horizon and computation-gap samples
    """
    seeds = tuple(config.experiment.eval_seeds if eval_seeds is None else eval_seeds)
    jobs = [(config, policy, testset, s, artifacts_dir) for s in seeds]
    frames = parallel_map(_evaluate_seed, jobs, workers, desc="eval")
    per_seed = pd.concat(frames, ignore_index=True)
    report = EvaluationReport(
        per_seed=per_seed.drop(columns=["horizons", "gaps"]),
        horizons=_split(per_seed["horizons"]),
        gaps=_split(per_seed["gaps"]),
        n_max=config.mpc.n_max,
        stamp=artifact_stamp(config_hash(config), testset.hash, eval_seeds=list(seeds)),
    )
    logger.info("evaluated %d seeds: mean cost %.3f, recompute fraction %.3f",
                len(seeds), report.mean_cost, report.recompute_fraction)
    return report


def evaluate_checkpoint(config: ExperimentConfig, checkpoint: Path, testset: TestSet,
                        eval_seeds: tuple[int, ...] | None = None, workers: int = 1,
                        artifacts_dir: Path | None = None) -> EvaluationReport:
    report = evaluate(config, load_policy(config, checkpoint), testset, eval_seeds, workers, artifacts_dir)
    report.stamp["checkpoint"] = str(checkpoint)
    return report
