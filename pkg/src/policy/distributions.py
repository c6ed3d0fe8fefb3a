"""Log-probabilities, scores and samplers of the meta-policy distributions.

* recompute flag: Bernoulli parameterized by its logit
* horizon: generalized Poisson (GP-2) with mean ``mu`` and dispersion ``alpha``,
  ``E[N] = mu`` and ``Var[N] = mu (1 + alpha mu)^2``
* inputs: scalar Gaussians with log-std parameterization
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log_expit

from src.errors import GpdDomainError

LOG_2PI = float(np.log(2.0 * np.pi))


# Bernoulli

def bernoulli_log_prob(c: np.ndarray | int, logit: np.ndarray | float) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    logit = np.asarray(logit, dtype=np.float64)
    return c * log_expit(logit) + (1.0 - c) * log_expit(-logit)


def bernoulli_score(c: np.ndarray | int, logit: np.ndarray | float) -> np.ndarray:
    """d log P / d logit."""
    return np.asarray(c, dtype=np.float64) - expit(logit)


def bernoulli_sample(logit: float, rng: np.random.Generator) -> int:
    return int(rng.random() < expit(logit))


def logit_for_probability(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie in (0, 1)")
    return float(-np.log(1.0 / p - 1.0))


# Generalized Poisson

def gpd_in_domain(n, mu, alpha) -> np.ndarray:
    n, mu, alpha = (np.asarray(a, dtype=np.float64) for a in (n, mu, alpha))
    return (mu > 0.0) & (1.0 + alpha * mu > 0.0) & (1.0 + alpha * n > 0.0) & (n >= 0.0)


def gpd_log_prob(n, mu, alpha) -> np.ndarray:
    """log P(N = n) of the GP-2 distribution; ``-inf`` outside its domain."""
    n, mu, alpha = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (n, mu, alpha)))
    valid = gpd_in_domain(n, mu, alpha)
    out = np.full(n.shape, -np.inf)
    if np.any(valid):
        nv, mv, av = n[valid], mu[valid], alpha[valid]
        a_mu, a_n = 1.0 + av * mv, 1.0 + av * nv
        out[valid] = (
            nv * (np.log(mv) - np.log(a_mu))
            + (nv - 1.0) * np.log(a_n)
            - gammaln(nv + 1.0)
            - mv * a_n / a_mu
        )
    return out[()] if out.ndim == 0 else out


def gpd_log_prob_strict(n, mu, alpha) -> np.ndarray:
    """Like ``gpd_log_prob`` but raises instead of returning ``-inf``."""
    if not np.all(gpd_in_domain(n, mu, alpha)):
        raise GpdDomainError(f"generalized Poisson undefined at N={n}, mu={mu}, alpha={alpha}")
    return gpd_log_prob(n, mu, alpha)


def gpd_score(n, mu, alpha) -> tuple[np.ndarray, np.ndarray]:
    """(d log P / d mu, d log P / d alpha); zero where the pmf is undefined."""
    n, mu, alpha = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (n, mu, alpha)))
    valid = gpd_in_domain(n, mu, alpha)
    a_mu = np.where(valid, 1.0 + alpha * mu, 1.0)
    a_n = np.where(valid, 1.0 + alpha * n, 1.0)
    safe_mu = np.where(valid, mu, 1.0)
    d_mu = n / safe_mu - n * alpha / a_mu - a_n / a_mu ** 2
    d_alpha = -n * mu / a_mu + n * (n - 1.0) / a_n - mu * (n - mu) / a_mu ** 2
    return np.where(valid, d_mu, 0.0), np.where(valid, d_alpha, 0.0)


def gpd_moments(mu: float, alpha: float) -> tuple[float, float]:
    return mu, mu * (1.0 + alpha * mu) ** 2


def gpd_sample(
    mu: float,
    alpha: float,
    rng: np.random.Generator,
    n_min: int | None = None,
    n_max: int | None = None,
    size: int | None = None,
):
    """Normal-approximation sample ``floor(mu + sd * z + 0.5)``, clipped when bounds are given."""
    _, var = gpd_moments(mu, alpha)
    z = rng.standard_normal(size)
    draw = np.floor(mu + np.sqrt(var) * z + 0.5)
    if n_min is not None or n_max is not None:
        draw = np.clip(draw, n_min, n_max)
    return draw.astype(np.int64) if size is not None else int(draw)


# Gaussian

def gaussian_log_prob(u, mean, log_std) -> np.ndarray:
    u, mean, log_std = (np.asarray(a, dtype=np.float64) for a in (u, mean, log_std))
    z = (u - mean) * np.exp(-log_std)
    return -0.5 * z ** 2 - log_std - 0.5 * LOG_2PI


def gaussian_score(u, mean, log_std) -> tuple[np.ndarray, np.ndarray]:
    """(d log P / d mean, d log P / d log_std)."""
    u, mean, log_std = (np.asarray(a, dtype=np.float64) for a in (u, mean, log_std))
    inv_var = np.exp(-2.0 * log_std)
    return (u - mean) * inv_var, (u - mean) ** 2 * inv_var - 1.0


# Mixture

@dataclass
class MixtureTerms:
    """Per-component log-probabilities of one mixture action."""
    recompute: np.ndarray
    horizon: np.ndarray
    control: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.recompute + self.horizon + self.control


def mixture_log_prob(
    c,
    n,
    u,
    logit,
    mu,
    alpha,
    mean_M,
    mean_ML,
    log_std_M,
    log_std_ML,
    stochastic: tuple[bool, bool, bool, bool] = (True, True, True, True),
) -> MixtureTerms:
    """Log-probability of ``(c, N, u)`` under the recompute/horizon/input mixture.

    ``n`` is the sampled horizon when ``c = 1`` and the horizon of the last
    computation when ``c = 0``. ``u`` is read as a draw of the branch selected
    by ``c``. ``stochastic`` flags (recompute, horizon, u_M, u_ML) drop the
    terms of components that act deterministically.
    """
    c = np.asarray(c, dtype=np.float64)
    sto_c, sto_n, sto_m, sto_ml = stochastic
    zeros = np.zeros(np.broadcast(c, u).shape)
    recompute = bernoulli_log_prob(c, logit) if sto_c else zeros
    horizon = gpd_log_prob(n, mu, alpha) if sto_n else zeros
    log_m = gaussian_log_prob(u, mean_M, log_std_M) if sto_m else zeros
    log_ml = gaussian_log_prob(u, mean_ML, log_std_ML) if sto_ml else zeros
    control = np.where(c > 0.5, log_m, log_ml)
    return MixtureTerms(recompute=recompute + zeros, horizon=horizon + zeros, control=control + zeros)
