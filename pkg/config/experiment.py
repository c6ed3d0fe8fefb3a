"""Experiment configuration schema and YAML persistence.

Every section rejects unknown keys so that a typo in a config file fails
loudly instead of silently running with defaults.
"""

import hashlib
import json
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError
from src.plant.dynamics import PendulumParams, StageCostWeights
from src.plant.episode import EpisodeConfig


class MpcConfig(BaseModel):
    """Horizon bounds and solver settings of the OCP."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_min: int = Field(1, ge=1, description="Smallest admissible prediction horizon")
    n_max: int = Field(40, ge=1, description="Largest admissible prediction horizon")
    discount: float = Field(1.0, gt=0.0, le=1.0, description="Stage-cost discount rho")
    max_iter: int = Field(200, ge=1, description="IPOPT iteration cap")
    tol: float = Field(1e-9, gt=0.0, description="IPOPT convergence tolerance")
    kkt_tol: float = Field(1e-6, gt=0.0, description="Unscaled KKT residual accepted as converged")

    @model_validator(mode="after")
    def _check_bounds(self) -> "MpcConfig":
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")
        return self


class PolicyConfig(BaseModel):
    """Meta-policy architecture and initialization."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    c_init: float = Field(0.9, gt=0.0, lt=1.0, description="Initial recompute probability")
    n_init: float = Field(31.0, description="Initial mean horizon")
    alpha_init: float = Field(0.0, description="Initial GPD dispersion")
    sigma_init: float = Field(0.5, gt=0.0, description="Initial std-dev of both input Gaussians")
    head_hidden: tuple[int, ...] = Field((64, 64), description="Hidden sizes of the recompute and horizon nets")
    value_hidden: tuple[int, ...] = Field((128, 128), description="Hidden sizes of the value net")
    output_gain: float = Field(0.01, gt=0.0, description="Orthogonal-init gain of head output layers")
    normalizer_warmup: int = Field(10_000, ge=0, description="Env steps after which feature statistics freeze")


class RewardConfig(BaseModel):
    """Weights of the constraint and computation reward terms."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambda_h: float = Field(-10.0, description="Constraint-violation weight (negative)")
    lambda_c: float = Field(0.01, ge=0.0, description="Computation weight")

    @field_validator("lambda_h")
    @classmethod
    def _negative(cls, v: float) -> float:
        if v >= 0:
            raise ValueError("lambda_h must be negative")
        return v


class PpoConfig(BaseModel):
    """PPO hyperparameters and training-loop cadence."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(0.99, gt=0.0, le=1.0)
    gae_lambda: float = Field(0.9, ge=0.0, le=1.0)
    n_steps: int = Field(256, ge=1, description="Records collected per actor (Z)")
    n_envs: int = Field(4, ge=1, description="Parallel actors")
    learning_rate: float = Field(3e-4, gt=0.0)
    adam_eps: float = Field(1e-5, gt=0.0)
    clip_range: float = Field(0.25, gt=0.0)
    n_epochs: int = Field(10, ge=1)
    n_minibatches: int = Field(1, ge=1)
    vf_coef: float = Field(0.5, ge=0.0)
    ent_coef: float = Field(0.0, ge=0.0, le=0.0, description="Entropy bonus; only 0 is supported")
    max_grad_norm: float = Field(0.5, gt=0.0)
    frame_skip: tuple[int, ...] = Field((1, 2, 3, 4), description="Per-episode frame-skip choices in joint training")
    horizon_frame_skip: int = Field(10, ge=1, description="Frame skip for isolated horizon training")
    lqr_schedule_period: int = Field(4, ge=1, description="Fixed recompute period for isolated LQR training")
    total_steps: int = Field(300_000, ge=1)
    checkpoint_every: int = Field(10, ge=1, description="Updates between checkpoints")
    eval_every: int = Field(10, ge=1, description="Updates between test-set evaluations")

    @field_validator("frame_skip")
    @classmethod
    def _positive_skips(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v or min(v) < 1:
            raise ValueError("frame_skip needs at least one value >= 1")
        return v


class RunConfig(BaseModel):
    """Model seeds, evaluation seeds and test-set construction."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    seeds: tuple[int, ...] = Field((0, 1, 2, 3, 4), description="Model seeds")
    eval_seeds: tuple[int, ...] = Field((100, 101, 102, 103, 104), description="Evaluation seeds")
    test_set_size: int = Field(25, ge=1)
    test_set_seed: int = Field(2022)
    export_traces: bool = Field(False, description="Write a trace CSV per evaluated episode")
    export_solver_log: bool = Field(False, description="Write the per-solve OCP log of every evaluation seed")


class SweepConfig(BaseModel):
    """Baseline grid of fixed horizons and periodic recompute schedules."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    horizons: tuple[int, ...] = Field((4, 8, 12, 16, 20, 24, 28, 31, 35, 40))
    schedules: tuple[int, ...] = Field((1, 2, 3, 4, 5, 8, 10, 15, 20))
    reference_horizon: int = Field(31, description="Horizon of the every-step reference baseline")


def _mpc_model_params() -> PendulumParams:
    return PendulumParams(m=0.2, M=1.5)


class ExperimentConfig(BaseModel):
    """Complete experiment description."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    plant: PendulumParams = Field(default_factory=PendulumParams)
    model: PendulumParams = Field(default_factory=_mpc_model_params)
    cost: StageCostWeights = Field(default_factory=StageCostWeights)
    episode: EpisodeConfig = Field(default_factory=EpisodeConfig)
    mpc: MpcConfig = Field(default_factory=MpcConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    reward: RewardConfig = Field(default_factory=RewardConfig)
    ppo: PpoConfig = Field(default_factory=PpoConfig)
    experiment: RunConfig = Field(default_factory=RunConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @model_validator(mode="after")
    def _check_cross_section(self) -> "ExperimentConfig":
        if not self.mpc.n_min <= self.policy.n_init <= self.mpc.n_max:
            raise ValueError("policy.n_init must lie in [mpc.n_min, mpc.n_max]")
        for n in self.sweep.horizons:
            if not self.mpc.n_min <= n <= self.mpc.n_max:
                raise ValueError(f"sweep horizon {n} outside [mpc.n_min, mpc.n_max]")
        if self.plant.dt != self.model.dt:
            raise ValueError("plant and model must share the discretization step")
        return self

    def with_overrides(self, **sections: dict[str, Any]) -> "ExperimentConfig":
        """Return a copy with selected section fields replaced, re-validated."""
        data = self.model_dump(mode="json")
        for section, values in sections.items():
            data[section].update(values)
        return parse_experiment_config(data)


def parse_experiment_config(data: dict[str, Any] | None) -> ExperimentConfig:
    """Validate a raw mapping into an ExperimentConfig.

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Load an experiment config from a YAML file.

    Args:
        path: Path to the YAML file

    Returns:
        The validated configuration

    Raises:
        ConfigError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping of sections")
    return parse_experiment_config(data)


def dump_experiment_config(config: ExperimentConfig, path: Path | None = None) -> str:
    """Serialize a config to YAML, optionally writing it to ``path``."""
    text = yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
