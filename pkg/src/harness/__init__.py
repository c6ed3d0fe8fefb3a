"""Experiment orchestration: test set, baseline sweep, training, evaluation, ablation and plots."""

from .ablation import AblationReport, ablate
from .baseline import ScheduledPolicy, SweepResult, baseline_sweep, load_sweep
from .evaluation import EvaluationReport, evaluate, evaluate_checkpoint, load_policy
from .plots import emit_plots, read_dat
from .testset import EpisodeSpec, TestSet, build_testset, config_testset, load_testset
from .training_run import TrainingRun, train

__all__ = [
    "AblationReport",
    "ablate",
    "ScheduledPolicy",
    "SweepResult",
    "baseline_sweep",
    "load_sweep",
    "EvaluationReport",
    "evaluate",
    "evaluate_checkpoint",
    "load_policy",
    "emit_plots",
    "read_dat",
    "EpisodeSpec",
    "TestSet",
    "build_testset",
    "config_testset",
    "load_testset",
    "TrainingRun",
    "train",
]
