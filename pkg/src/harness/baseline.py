"""Baseline grid: fixed horizons crossed with periodic recompute schedules.

Each cell runs the deterministic dual-mode controller (MPC every ``k``
steps, LQR correction in between, initial LQR weights) over the test set.
A cell whose solver fails is kept in the grid and marked invalid.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from config.experiment import ExperimentConfig, config_hash
from src.control.dual_mode import default_lqr_weights
from src.control.ocp_solver import OcpSolver
from src.control.riccati import LqrWeights
from src.errors import NumericError, SolverError
from src.policy.meta_policy import Decision
from src.policy.state import AugmentedState
from src.training.rollout import RolloutWorker
from src.utils.helpers import artifact_stamp, load_json, parallel_map, save_json, write_table

from .evaluation import run_testset
from .testset import TestSet

logger = logging.getLogger(__name__)

GRID_COLUMNS = [
    "period", "horizon", "cost", "control_cost", "constraint_cost", "computation_cost",
    "recompute_fraction", "violations", "ocp_time", "overhead_time", "valid", "error",
]


@dataclass
class ScheduledPolicy:
    """Fixed horizon, recompute every ``period`` steps, fixed LQR weights.

    Satisfies the controller's decision-source protocol; every action is
    deterministic and carries log-probability 0.
    """
    horizon: int
    period: int
    weights: LqrWeights

    @property
    def lqr_weights(self) -> LqrWeights:
        return self.weights

    @property
    def initial_horizon(self) -> int:
        return self.horizon

    def decide(self, s: AugmentedState, rng: np.random.Generator, deterministic: bool = False) -> Decision:
        c = int(s.steps_since >= self.period)
        raw = s.features()
        return Decision(c=c, n=self.horizon if c else s.N_i, features=raw, raw_features=raw,
                        logit=0.0, mu=float(self.horizon), value=0.0)

    def sample_input(self, mean: float, c: int, rng: np.random.Generator, deterministic: bool = False) -> float:
        return float(mean)

    def decision_log_prob(self, decision: Decision, u: float, mean: float, deterministic: bool = False) -> float:
        return 0.0


def run_cell(job: tuple[ExperimentConfig, TestSet, LqrWeights, int, int]) -> dict:
    """Mean per-episode cost terms of one (period, horizon) cell."""
    config, testset, weights, period, horizon = job
    row = {"period": period, "horizon": horizon, "valid": True, "error": ""}
    try:
        worker = RolloutWorker(config, ScheduledPolicy(horizon, period, weights), np.random.default_rng(0))
        results = run_testset(worker, testset)
    except (SolverError, NumericError) as exc:
        logger.warning("baseline cell k=%d N=%d failed: %s", period, horizon, exc)
        row.update({name: np.nan for name in GRID_COLUMNS if name not in row})
        row.update(valid=False, error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(
        cost=float(np.mean([r.cost for r in results])),
        control_cost=float(np.mean([r.control_cost for r in results])),
        constraint_cost=float(np.mean([-r.constraint for r in results])),
        computation_cost=float(np.mean([r.computation_cost for r in results])),
        recompute_fraction=float(sum(r.computed_steps for r in results) / sum(r.steps for r in results)),
        violations=int(sum(r.violated for r in results)),
        ocp_time=float(np.mean([r.ocp_time for r in results])),
        overhead_time=float(np.mean([r.overhead_time for r in results])),
    )
    return row


@dataclass
class SweepResult:
    grid: pd.DataFrame
    stamp: dict

    @property
    def argmin(self) -> dict | None:
        valid = self.grid[self.grid["valid"]]
        if valid.empty:
            return None
        best = valid.loc[valid["cost"].idxmin()]
        return {"period": int(best["period"]), "horizon": int(best["horizon"]), "cost": float(best["cost"])}

    def cell(self, period: int, horizon: int) -> pd.Series:
        match = self.grid[(self.grid["period"] == period) & (self.grid["horizon"] == horizon)]
        if match.empty:
            raise KeyError(f"no baseline cell k={period} N={horizon}")
        return match.iloc[0]

    def surface(self) -> pd.DataFrame:
        """Cost pivot with schedules as rows and horizons as columns."""
        return self.grid.pivot(index="period", columns="horizon", values="cost")

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        path = write_table(self.grid, directory / "baseline_grid.csv", self.stamp)
        save_json({**self.stamp, "argmin": self.argmin, "cells": len(self.grid),
                   "invalid": int((~self.grid["valid"]).sum())}, directory / "baseline_summary.json")
        return path


def load_sweep(directory: Path) -> SweepResult:
    directory = Path(directory)
    grid = pd.read_csv(directory / "baseline_grid.csv", keep_default_na=False, na_values=[""])
    grid["valid"] = grid["valid"].astype(bool)
    grid["error"] = grid["error"].fillna("")
    stamp = load_json(directory / "baseline_grid.meta.json")
    return SweepResult(grid=grid[GRID_COLUMNS], stamp=stamp)


def baseline_sweep(
    config: ExperimentConfig,
    testset: TestSet,
    horizons: tuple[int, ...] | None = None,
    schedules: tuple[int, ...] | None = None,
    workers: int = 1,
) -> SweepResult:
    """Evaluate every (schedule, horizon) cell on the test set.

    Args:
        config: Experiment configuration (model, cost, reward weights)
        testset: Episodes every cell is run on
        horizons: Fixed horizons; defaults to ``config.sweep.horizons``
        schedules: Recompute periods; defaults to ``config.sweep.schedules``
        workers: Worker processes; results are merged by cell index

    Returns:
        The grid, one row per cell in (period, horizon) order
    """
    horizons = tuple(config.sweep.horizons if horizons is None else horizons)
    schedules = tuple(config.sweep.schedules if schedules is None else schedules)
    weights = default_lqr_weights(OcpSolver.from_experiment(config))
    jobs = [(config, testset, weights, k, n) for k in schedules for n in horizons]
    logger.info("baseline sweep: %d schedules x %d horizons on %d episodes",
                len(schedules), len(horizons), len(testset))
    rows = parallel_map(run_cell, jobs, workers, desc="sweep")
    grid = pd.DataFrame(rows, columns=GRID_COLUMNS)
    stamp = artifact_stamp(config_hash(config), testset.hash,
                           horizons=list(horizons), schedules=list(schedules))
    return SweepResult(grid=grid, stamp=stamp)
