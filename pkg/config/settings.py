"""Process-level settings for the MPC meta-tuner."""

from pathlib import Path
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables.

    Experiment parameters live in the YAML experiment config; these settings
    only describe where things go and how loudly the process talks.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="METAMPC_",
        case_sensitive=False,
        extra="ignore",
    )

    # Paths
    config_path: Path = Field(
        default=Path("config/default.yaml"),
        description="Experiment config used when --config is not given"
    )
    output_dir: Path = Field(
        default=Path("runs"),
        description="Root directory for sweep, training and evaluation outputs"
    )

    # Logging
    log_level: str = Field(
        default="INFO",
        description="Logging level"
    )

    # Parallelism
    workers: int = Field(
        default=1,
        ge=1,
        description="Worker processes for sweeps and evaluations, threads for rollouts"
    )

    @property
    def project_root(self) -> Path:
        """Get the project root directory."""
        return Path(__file__).parent.parent

    def resolve(self, path: Path) -> Path:
        """Resolve a relative path against the project root."""
        path = Path(path)
        return path if path.is_absolute() else self.project_root / path

    @property
    def sweep_dir(self) -> Path:
        """Directory for baseline sweep grids."""
        return self.resolve(self.output_dir) / "sweep"

    @property
    def training_dir(self) -> Path:
        """Directory for training runs (one sub-directory per mode and seed)."""
        return self.resolve(self.output_dir) / "train"

    @property
    def reports_dir(self) -> Path:
        """Directory for evaluation and ablation reports."""
        return self.resolve(self.output_dir) / "reports"

    @property
    def plots_dir(self) -> Path:
        """Directory for plot-data files and rendered figures."""
        return self.resolve(self.output_dir) / "plots"

    def ensure_directories(self) -> None:
        """Create all output directories if they don't exist."""
        for directory in [self.sweep_dir, self.training_dir, self.reports_dir, self.plots_dir]:
            directory.mkdir(parents=True, exist_ok=True)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
