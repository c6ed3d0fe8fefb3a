"""Alter one aspect of a trained policy at a time and measure the cost change."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import pandas as pd

from config.experiment import ExperimentConfig
from src.policy.meta_policy import MetaPolicy
from src.utils.helpers import save_json, write_table

from .evaluation import EvaluationReport, evaluate, load_policy
from .testset import TestSet

logger = logging.getLogger(__name__)


def schedule_period(recompute_fraction: float) -> int:
    """Period of the fixed schedule matching an average recompute frequency."""
    if recompute_fraction <= 0.0:
        raise ValueError("recompute fraction must be positive")
    return max(1, int(round(1.0 / recompute_fraction)))


def percent_change(cost: float, reference: float) -> float:
    return 100.0 * (cost - reference) / abs(reference)


@dataclass
class AblationReport:
    """Cost of each altered policy relative to the unmodified one."""
    reference: EvaluationReport
    scenarios: dict[str, EvaluationReport] = field(default_factory=dict)
    settings: dict[str, dict] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        base = self.reference.mean_cost
        rows = [{"scenario": "unmodified", "cost": base, "change_pct": 0.0,
                 "recompute_fraction": self.reference.recompute_fraction}]
        for name, report in self.scenarios.items():
            rows.append({
                "scenario": name,
                "cost": report.mean_cost,
                "change_pct": percent_change(report.mean_cost, base),
                "recompute_fraction": report.recompute_fraction,
            })
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {
            **self.reference.stamp,
            "rows": self.frame().to_dict(orient="records"),
            "settings": self.settings,
        }

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        write_table(self.frame(), directory / "ablation.csv", self.reference.stamp)
        path = directory / "ablation.json"
        save_json(self.to_dict(), path)
        return path


def ablate(
    config: ExperimentConfig,
    checkpoint: Path,
    testset: TestSet,
    eval_seeds: tuple[int, ...] | None = None,
    horizon_cap: int | None = None,
    workers: int = 1,
) -> AblationReport:
    """Evaluate the unmodified policy and three single alterations of it.

    Scenarios: LQR weights reset to their initialization; horizon capped at
    ``horizon_cap`` (default ``config.sweep.reference_horizon``); recompute
    head replaced by a periodic schedule at the policy's average frequency.
    """
    cap = config.sweep.reference_horizon if horizon_cap is None else int(horizon_cap)
    reference = evaluate(config, load_policy(config, checkpoint), testset, eval_seeds, workers)
    reference.stamp["checkpoint"] = str(checkpoint)
    period = schedule_period(reference.recompute_fraction)

    alterations: dict[str, Callable[[MetaPolicy], None]] = {
        "reset_lqr_weights": lambda p: p.reset_lqr_weights(),
        "horizon_cap": lambda p: setattr(p, "horizon_cap", cap),
        "fixed_recompute_schedule": lambda p: setattr(p, "fixed_recompute_period", period),
    }
    report = AblationReport(reference=reference, settings={
        "horizon_cap": {"cap": cap},
        "fixed_recompute_schedule": {"period": period},
    })
    for name, alter in alterations.items():
        policy = load_policy(config, checkpoint)
        alter(policy)
        report.scenarios[name] = evaluate(config, policy, testset, eval_seeds, workers)
        logger.info("ablation %s: cost %.3f (%+.2f%%)", name, report.scenarios[name].mean_cost,
                    percent_change(report.scenarios[name].mean_cost, reference.mean_cost))
    return report
