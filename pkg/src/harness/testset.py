"""Seeded, content-addressed evaluation test set.

Every stochastic element of an evaluation episode (initial state and the
whole reference schedule) is drawn once here, so baselines and learned
policies face exactly the same episodes.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.errors import ConfigError
from src.plant.episode import EpisodeConfig, sample_initial, sample_reference_schedule
from src.utils.helpers import save_json, sha256_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeSpec:
    """Pre-drawn episode: initial state, per-step reference and its own seed."""
    index: int
    seed: int
    initial_state: tuple[float, ...]
    references: tuple[float, ...]

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.initial_state, dtype=np.float64)

    @property
    def reference_schedule(self) -> np.ndarray:
        return np.array(self.references, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            # hex keeps the floats exact through JSON
            "initial_state": [float(v).hex() for v in self.initial_state],
            "references": [float(v).hex() for v in self.references],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeSpec":
        return cls(
            index=int(data["index"]),
            seed=int(data["seed"]),
            initial_state=tuple(float.fromhex(v) for v in data["initial_state"]),
            references=tuple(float.fromhex(v) for v in data["references"]),
        )


@dataclass(frozen=True)
class TestSet:
    """Immutable collection of episode specifications."""
    __test__ = False  # not a pytest class

    seed: int
    episodes: tuple[EpisodeSpec, ...]

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "episodes": [e.to_dict() for e in self.episodes]}

    @property
    def hash(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")))

    def subset(self, n: int) -> "TestSet":
        """The first ``n`` episodes."""
        return TestSet(seed=self.seed, episodes=self.episodes[:n])

    def save(self, path: Path) -> Path:
        path = Path(path)
        save_json({**self.to_dict(), "hash": self.hash}, path)
        return path


def build_testset(size: int, seed: int, episode: EpisodeConfig) -> TestSet:
    """Draw ``size`` episodes from independent child streams of ``seed``.

    Args:
        size: Number of episodes
        seed: Root seed of the test set
        episode: Episode protocol (length and reference redraw period)

    Returns:
        The test set; identical arguments give an identical hash
    """
    children = np.random.SeedSequence(seed).spawn(size)
    episodes = []
    for index, child in enumerate(children):
        rng = np.random.default_rng(child)
        x0 = sample_initial(rng)
        references = sample_reference_schedule(rng, episode)
        episodes.append(EpisodeSpec(
            index=index,
            seed=int(child.generate_state(1)[0]),
            initial_state=tuple(float(v) for v in x0),
            references=tuple(float(v) for v in references),
        ))
    testset = TestSet(seed=seed, episodes=tuple(episodes))
    logger.info("built test set of %d episodes (hash %s)", size, testset.hash[:12])
    return testset


def load_testset(path: Path) -> TestSet:
    """Load a saved test set and verify its recorded hash.

    Raises:
        ConfigError: If the file is missing or was modified
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"test set not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    testset = TestSet(seed=int(data["seed"]), episodes=tuple(EpisodeSpec.from_dict(e) for e in data["episodes"]))
    recorded = data.get("hash")
    if recorded is not None and recorded != testset.hash:
        raise ConfigError(f"test set {path} does not match its recorded hash")
    return testset


def config_testset(config) -> TestSet:
    """The test set described by ``config.experiment``."""
    return build_testset(config.experiment.test_set_size, config.experiment.test_set_seed, config.episode)
