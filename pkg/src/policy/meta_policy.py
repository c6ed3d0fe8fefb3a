"""The meta-policy: recompute, horizon and input heads over the augmented state.

The recompute flag is Bernoulli with a network logit, the horizon is a
generalized Poisson whose mean is a tanh-scaled network output and whose
dispersion ``alpha`` is input independent, and the executed input is a
Gaussian around the mean of the selected dual-mode branch. The LQR weights
shaping the ``u_ML`` mean are part of the parameter vector.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.control.riccati import LqrWeights

from .distributions import (
    MixtureTerms,
    bernoulli_sample,
    bernoulli_score,
    gaussian_score,
    gpd_sample,
    gpd_score,
    logit_for_probability,
    mixture_log_prob,
)
from .mlp import Mlp, RunningNormalizer
from .params import TRAINABLE, PolicyMode, PolicyParams
from .state import FEATURE_DIM, AugmentedState

logger = logging.getLogger(__name__)

# relative distance of the dispersion floor from -1/n_max, where P(N = n_max) vanishes
ALPHA_FLOOR_MARGIN = 1e-3


@dataclass
class Decision:
    """Meta-decision ``(c, N)`` with the head outputs it was drawn from."""
    c: int
    n: int                    # sampled horizon if c == 1, else N_i
    features: np.ndarray      # normalized
    raw_features: np.ndarray
    logit: float
    mu: float
    value: float


@dataclass
class LogProbBatch:
    """Everything needed to re-evaluate stored actions under the current parameters.

    ``mean_ML`` and ``dmean_ML`` (d mean / d theta_L, shape (B, P_L)) are
    recomputed by the trainer from the stored linearizations; rows with
    ``c = 1`` are ignored.
    """
    features: np.ndarray
    c: np.ndarray
    n: np.ndarray
    u: np.ndarray
    mean_M: np.ndarray
    mean_ML: np.ndarray
    dmean_ML: np.ndarray

    def __len__(self) -> int:
        return len(self.c)


class MetaPolicy:
    """Mixture policy over ``[c, N, u_M, u_ML]`` plus the value function.

    Attributes:
        params: Flat policy parameter vector with named groups
        value_net: Value network over the same features (optimized alongside)
        mode: Which groups are trained; frozen groups act deterministically
        horizon_cap: Upper bound applied to every chosen horizon
        fixed_recompute_period: Replace the recompute head by a periodic schedule
    """

    def __init__(
        self,
        lqr_init: LqrWeights,
        theta_M: np.ndarray,
        n_min: int = 1,
        n_max: int = 40,
        head_hidden: tuple[int, ...] = (64, 64),
        value_hidden: tuple[int, ...] = (128, 128),
        normalizer_warmup: int = 10_000,
        mode: PolicyMode = PolicyMode.JOINT,
        lqr_schedule_period: int = 4,
    ):
        self.n_min, self.n_max = int(n_min), int(n_max)
        self.lqr_init = lqr_init
        self.mode = PolicyMode(mode)
        self.head_sizes = (FEATURE_DIM, *head_hidden, 1)
        self.value_sizes = (FEATURE_DIM, *value_hidden, 1)
        self.params = PolicyParams({
            "theta_c": Mlp.count_params(self.head_sizes),
            "theta_N": Mlp.count_params(self.head_sizes),
            "alpha": 1,
            "theta_M": len(theta_M),
            "theta_L": lqr_init.n_params,
            "log_sigma_M": 1,
            "log_sigma_ML": 1,
        })
        self.params.set_group("theta_M", theta_M)
        self.params.set_group("theta_L", lqr_init.params())
        self.recompute_net = Mlp(self.head_sizes, self.params.group("theta_c"))
        self.horizon_net = Mlp(self.head_sizes, self.params.group("theta_N"))
        self.value_net = Mlp(self.value_sizes)
        self.normalizer = RunningNormalizer(FEATURE_DIM, warmup=normalizer_warmup)
        self.horizon_cap: int | None = None
        self.fixed_recompute_period: int | None = None
        self.lqr_schedule_period = int(lqr_schedule_period)

    @classmethod
    def from_experiment(cls, config, lqr_init: LqrWeights, rng: np.random.Generator,
                        mode: PolicyMode = PolicyMode.JOINT) -> "MetaPolicy":
        """Build and initialize a policy from an ExperimentConfig."""
        theta_M = np.array([config.cost.input_change_weight, config.mpc.discount])
        policy = cls(
            lqr_init=lqr_init,
            theta_M=theta_M,
            n_min=config.mpc.n_min,
            n_max=config.mpc.n_max,
            head_hidden=config.policy.head_hidden,
            value_hidden=config.policy.value_hidden,
            normalizer_warmup=config.policy.normalizer_warmup,
            mode=mode,
            lqr_schedule_period=config.ppo.lqr_schedule_period,
        )
        policy.init_networks(rng, config.policy.output_gain)
        policy.initialize(config.policy.c_init, config.policy.n_init, config.policy.alpha_init,
                          config.policy.sigma_init)
        return policy

    # Initialization

    def init_networks(self, rng: np.random.Generator, output_gain: float = 0.01) -> None:
        self.recompute_net.init(rng, output_gain=output_gain)
        self.horizon_net.init(rng, output_gain=output_gain)
        self.value_net.init(rng, output_gain=1.0)

    def initialize(self, c_init: float, n_init: float, alpha_init: float = 0.0, sigma_init: float = 0.5) -> None:
        """Set head biases so the initial policy recomputes with ``c_init`` at mean horizon ``n_init``."""
        self.recompute_net.set_output_bias(recompute_bias(c_init))
        self.horizon_net.set_output_bias(horizon_bias(n_init, self.n_min, self.n_max))
        self.params.set_group("alpha", alpha_init)
        self.params.set_group("log_sigma_M", np.log(sigma_init))
        self.params.set_group("log_sigma_ML", np.log(sigma_init))
        self.clip_alpha()

    def reset_lqr_weights(self) -> None:
        self.params.set_group("theta_L", self.lqr_init.params())

    # Parameter views

    @property
    def alpha(self) -> float:
        return float(self.params.group("alpha")[0])

    @property
    def alpha_floor(self) -> float:
        """Smallest dispersion at which every horizon up to ``n_max`` keeps a finite log-probability."""
        return -(1.0 - ALPHA_FLOOR_MARGIN) / self.n_max

    def clip_alpha(self) -> None:
        self.params.set_group("alpha", max(self.alpha, self.alpha_floor))

    @property
    def log_std_M(self) -> float:
        return float(self.params.group("log_sigma_M")[0])

    @property
    def log_std_ML(self) -> float:
        return float(self.params.group("log_sigma_ML")[0])

    @property
    def sigma_M(self) -> float:
        return float(np.exp(self.log_std_M))

    @property
    def sigma_ML(self) -> float:
        return float(np.exp(self.log_std_ML))

    @property
    def lqr_weights(self) -> LqrWeights:
        return LqrWeights.from_params(self.params.group("theta_L"), self.lqr_init.n, self.lqr_init.m)

    @property
    def trainable_mask(self) -> np.ndarray:
        return self.params.trainable_mask(self.mode)

    @property
    def stochastic(self) -> tuple[bool, bool, bool, bool]:
        """Stochastic flags of (recompute, horizon, u_M, u_ML) in the current mode."""
        trained = TRAINABLE[self.mode]
        recompute = "theta_c" in trained and self.fixed_recompute_period is None
        return recompute, "theta_N" in trained, "log_sigma_M" in trained, "log_sigma_ML" in trained

    @property
    def recompute_period(self) -> int | None:
        """Period of the schedule replacing a frozen recompute head, None if the head decides."""
        if self.fixed_recompute_period is not None:
            return self.fixed_recompute_period
        if self.mode == PolicyMode.LQR:
            return self.lqr_schedule_period
        return None

    @property
    def initial_horizon(self) -> int:
        """Horizon of the deterministic computation that opens every episode."""
        if self.horizon_cap is not None:
            return min(self.n_max, self.horizon_cap)
        return self.n_max

    # Heads

    def horizon_mean(self, raw: np.ndarray) -> np.ndarray:
        return self.n_min + 0.5 * (np.tanh(raw) + 1.0) * (self.n_max - self.n_min)

    def horizon_mean_slope(self, raw: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 - np.tanh(raw) ** 2) * (self.n_max - self.n_min)

    def features(self, s: AugmentedState) -> tuple[np.ndarray, np.ndarray]:
        raw = s.features()
        return self.normalizer(raw), raw

    def heads(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(recompute logit, horizon mean) for a batch of normalized features."""
        logit = self.recompute_net.forward(features)[:, 0]
        mu = self.horizon_mean(self.horizon_net.forward(features)[:, 0])
        return logit, mu

    def value(self, features: np.ndarray) -> np.ndarray:
        return self.value_net.forward(features)[:, 0]

    # Acting

    def decide(self, s: AugmentedState, rng: np.random.Generator, deterministic: bool = False) -> Decision:
        """Draw the meta-decision for state ``s``.

        Exploitation (``deterministic``) keeps the recompute head stochastic
        and takes the rounded mean horizon.
        """
        features, raw = self.features(s)
        logit, mu = (float(a[0]) for a in self.heads(features))
        value = float(self.value(features)[0])
        sto_c, sto_n, _, _ = self.stochastic

        period = self.recompute_period
        if period is not None:
            c = int(s.steps_since >= period)
        elif sto_c:
            c = bernoulli_sample(logit, rng)
        else:
            c = 1

        n = s.N_i
        if c == 1:
            if sto_n and not deterministic:
                n = gpd_sample(mu, self.alpha, rng, self.n_min, self.n_max)
            else:
                n = int(np.clip(np.floor(mu + 0.5), self.n_min, self.n_max))
            if self.horizon_cap is not None:
                n = min(n, self.horizon_cap)
        return Decision(c=c, n=int(n), features=features, raw_features=raw, logit=logit, mu=mu, value=value)

    def sample_input(self, mean: float, c: int, rng: np.random.Generator, deterministic: bool = False) -> float:
        _, _, sto_m, sto_ml = self.stochastic
        stochastic, log_std = (sto_m, self.log_std_M) if c == 1 else (sto_ml, self.log_std_ML)
        if deterministic or not stochastic:
            return float(mean)
        return float(mean + np.exp(log_std) * rng.standard_normal())

    def decision_log_prob(self, decision: Decision, u: float, mean: float, deterministic: bool = False) -> float:
        """Log-probability of an action drawn by ``decide``/``sample_input``."""
        if deterministic:
            return 0.0
        terms = mixture_log_prob(
            decision.c, decision.n, u, decision.logit, decision.mu, self.alpha,
            mean, mean, self.log_std_M, self.log_std_ML, self.stochastic,
        )
        return float(terms.total)

    # Evaluation with gradients

    def log_prob_terms(self, batch: LogProbBatch) -> MixtureTerms:
        logit, mu = self.heads(batch.features)
        return mixture_log_prob(
            batch.c, batch.n, batch.u, logit, mu, self.alpha,
            batch.mean_M, batch.mean_ML, self.log_std_M, self.log_std_ML, self.stochastic,
        )

    def log_prob_and_grad(self, batch: LogProbBatch, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Log-probabilities and the gradient of ``sum(upstream * log_prob)``.

        Returns:
            (log_prob of shape (B,), gradient over ``params.vector``; frozen
            groups receive zeros)
        """
        sto_c, sto_n, sto_m, sto_ml = self.stochastic
        upstream = np.asarray(upstream, dtype=np.float64)
        c = np.asarray(batch.c, dtype=np.float64)
        grad = np.zeros(self.params.size)
        slices = self.params.slices

        cache_c = self.recompute_net.forward_cached(batch.features)
        cache_n = self.horizon_net.forward_cached(batch.features)
        logit = cache_c.output[:, 0]
        raw = cache_n.output[:, 0]
        mu = self.horizon_mean(raw)
        terms = mixture_log_prob(
            c, batch.n, batch.u, logit, mu, self.alpha,
            batch.mean_M, batch.mean_ML, self.log_std_M, self.log_std_ML, self.stochastic,
        )

        if sto_c:
            d_logit = upstream * bernoulli_score(c, logit)
            grad[slices["theta_c"]] = self.recompute_net.backward(cache_c, d_logit[:, None])[0]
        if sto_n:
            d_mu, d_alpha = gpd_score(batch.n, mu, self.alpha)
            d_raw = upstream * d_mu * self.horizon_mean_slope(raw)
            grad[slices["theta_N"]] = self.horizon_net.backward(cache_n, d_raw[:, None])[0]
            grad[slices["alpha"]] = np.sum(upstream * d_alpha)
        is_m = c > 0.5
        if sto_m:
            _, d_log_std = gaussian_score(batch.u, batch.mean_M, self.log_std_M)
            grad[slices["log_sigma_M"]] = np.sum(np.where(is_m, upstream * d_log_std, 0.0))
        if sto_ml:
            d_mean, d_log_std = gaussian_score(batch.u, batch.mean_ML, self.log_std_ML)
            weight = np.where(is_m, 0.0, upstream * d_mean)
            grad[slices["theta_L"]] = weight @ np.asarray(batch.dmean_ML).reshape(len(batch), -1)
            grad[slices["log_sigma_ML"]] = np.sum(np.where(is_m, 0.0, upstream * d_log_std))
        return terms.total, grad

    def value_and_grad(self, features: np.ndarray, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cache = self.value_net.forward_cached(features)
        grad, _ = self.value_net.backward(cache, np.asarray(upstream, dtype=np.float64)[:, None])
        return cache.output[:, 0], grad

    # Persistence

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"policy/{k}": v for k, v in self.params.named_arrays().items()}
        arrays["value/flat"] = self.value_net.flat.copy()
        arrays.update({f"normalizer/{k}": v for k, v in self.normalizer.state_arrays().items()})
        arrays["lqr_init/params"] = self.lqr_init.params()
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.params.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("policy/")})
        self.value_net.flat[:] = arrays["value/flat"]
        self.normalizer.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("normalizer/")})


def recompute_bias(c_init: float) -> float:
    """Logit whose sigmoid equals ``c_init``."""
    return logit_for_probability(c_init)


def horizon_bias(n_init: float, n_min: int, n_max: int) -> float:
    """Raw output whose tanh-scaled mean equals ``n_init``."""
    if not n_min <= n_init <= n_max:
        raise ValueError(f"n_init {n_init} outside [{n_min}, {n_max}]")
    target = 2.0 * (n_init - n_min) / (n_max - n_min) - 1.0
    return float(np.arctanh(np.clip(target, -1.0 + 1e-12, 1.0 - 1e-12)))
