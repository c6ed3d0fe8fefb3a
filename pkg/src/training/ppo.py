"""Clipped PPO over the meta-policy and the value network.

Gradients come from the policy's analytic log-probability scores; the LQR
weights receive theirs through the Riccati sensitivities of the gains that
shaped each stored ``u_ML`` mean.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from config.experiment import PpoConfig
from src.control.dual_mode import LqrDesigner, gain_gradient
from src.control.riccati import LqrSolution, lqr_input, solve_lqr_trajectory
from src.errors import NonFiniteGradientError
from src.policy.meta_policy import LogProbBatch, MetaPolicy

from .buffer import TransitionRecord

logger = logging.getLogger(__name__)

MAX_LOG_RATIO = 20.0


class Adam:
    """Adam over a flat parameter vector."""

    def __init__(self, size: int, lr: float = 3e-4, eps: float = 1e-5, beta1: float = 0.9, beta2: float = 0.999):
        self.lr, self.eps, self.beta1, self.beta2 = lr, eps, beta1, beta2
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the parameters after one descent step on ``grad``."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"m": self.m.copy(), "v": self.v.copy(), "t": np.array([float(self.t)])}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.m = np.array(arrays["m"], dtype=np.float64)
        self.v = np.array(arrays["v"], dtype=np.float64)
        self.t = int(arrays["t"][0])


@dataclass
class UpdateMetrics:
    policy_loss: float
    value_loss: float
    grad_norm: float
    clip_fraction: float
    approx_kl: float
    skipped: int
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray, clip_range: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample ``min(r A, clip(r) A)`` and its derivative with respect to ``r``."""
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range) * advantages
    objective = np.minimum(unclipped, clipped)
    d_ratio = np.where(unclipped <= clipped, advantages, 0.0)
    return objective, d_ratio


def lqr_branch_means(
    records: list[TransitionRecord],
    designer: LqrDesigner,
) -> tuple[np.ndarray, np.ndarray]:
    """u_ML means and their theta_L gradients under the designer's current weights.

    Records with ``c = 1`` get zeros. One time-varying design is solved per
    distinct plan.
    """
    n_params = designer.weights.n_params
    means = np.zeros(len(records))
    grads = np.zeros((len(records), n_params))
    steady = designer.steady(with_gradients=True)
    designs: dict[int, LqrSolution] = {}
    for idx, record in enumerate(records):
        if record.c == 1:
            continue
        solution = record.plan.solution
        key = id(solution)
        if key not in designs:
            designs[key] = solve_lqr_trajectory(solution.A_seq, solution.B_seq, designer.weights, steady, True)
        lqr = designs[key]
        gain = lqr.K_seq[record.offset] if record.offset < solution.horizon else lqr.K_inf
        means[idx] = record.feedforward + float(lqr_input(gain, record.error)[0])
        grads[idx] = -gain_gradient(lqr, record.offset)[:, 0, :] @ record.error
    return means, grads


class PpoTrainer:
    """Owns the optimizer state and applies PPO updates to a policy in place."""

    def __init__(self, policy: MetaPolicy, designer: LqrDesigner, config: PpoConfig, rng: np.random.Generator):
        self.policy = policy
        self.designer = designer
        self.config = config
        self.rng = rng
        self.n_policy = policy.params.size
        self.optimizer = Adam(self.n_policy + policy.value_net.n_params, config.learning_rate, config.adam_eps)
        self.updates = 0

    def _batch(self, records: list[TransitionRecord], mean_ML: np.ndarray, dmean_ML: np.ndarray) -> LogProbBatch:
        return LogProbBatch(
            features=np.stack([r.features for r in records]),
            c=np.array([r.c for r in records], dtype=np.float64),
            n=np.array([r.n for r in records], dtype=np.float64),
            u=np.array([r.u for r in records]),
            mean_M=np.array([r.mean_M for r in records]),
            mean_ML=mean_ML,
            dmean_ML=dmean_ML,
        )

    def branch_means(self, records: list[TransitionRecord]) -> tuple[np.ndarray, np.ndarray]:
        self.designer.set_weights(self.policy.lqr_weights)
        return lqr_branch_means(records, self.designer)

    def log_probs(self, records: list[TransitionRecord]) -> np.ndarray:
        """Log-probabilities of stored actions under the current parameters."""
        return self.policy.log_prob_terms(self._batch(records, *self.branch_means(records))).total

    def update(self, records: list[TransitionRecord]) -> UpdateMetrics:
        """Run ``n_epochs`` passes of minibatch PPO over records with computed advantages."""
        cfg = self.config
        policy = self.policy
        mask = policy.trainable_mask
        train_lqr = bool(mask[policy.params.slices["theta_L"]].any())
        old_log_prob = np.array([r.log_prob for r in records])
        advantages = np.array([r.advantage for r in records])
        returns = np.array([r.ret for r in records])
        size = len(records)

        losses, value_losses, norms, clip_fracs, kls, skipped = [], [], [], [], [], 0
        has_lqr_samples = any(r.c == 0 for r in records)
        batch = None
        for _ in range(cfg.n_epochs):
            # u_ML means move with theta_L
            if batch is None or (train_lqr and has_lqr_samples):
                batch = self._batch(records, *self.branch_means(records))
            order = self.rng.permutation(size)
            for idx in np.array_split(order, cfg.n_minibatches):
                if len(idx) == 0:
                    continue
                mb = LogProbBatch(
                    features=batch.features[idx], c=batch.c[idx], n=batch.n[idx], u=batch.u[idx],
                    mean_M=batch.mean_M[idx], mean_ML=batch.mean_ML[idx], dmean_ML=batch.dmean_ML[idx],
                )
                adv = advantages[idx]
                if len(idx) > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

                log_prob = policy.log_prob_terms(mb).total
                with np.errstate(over="ignore", invalid="ignore"):
                    ratio = np.exp(np.minimum(log_prob - old_log_prob[idx], MAX_LOG_RATIO))
                ratio = np.where(np.isfinite(log_prob), ratio, 0.0)
                objective, d_ratio = clipped_surrogate(ratio, adv, cfg.clip_range)
                _, policy_grad = policy.log_prob_and_grad(mb, -d_ratio * ratio / len(idx))

                values = policy.value(mb.features)
                value_error = values - returns[idx]
                _, value_grad = policy.value_and_grad(mb.features, cfg.vf_coef * 2.0 * value_error / len(idx))

                grad = np.concatenate([np.where(mask, policy_grad, 0.0), value_grad])
                try:
                    norm = self._clip(grad)
                except NonFiniteGradientError as exc:
                    logger.warning("skipping PPO step: %s", exc)
                    skipped += 1
                    continue
                params = self.optimizer.step(np.concatenate([policy.params.vector, policy.value_net.flat]), grad)
                policy.params.vector[:] = np.where(mask, params[: self.n_policy], policy.params.vector)
                policy.value_net.flat[:] = params[self.n_policy:]
                policy.clip_alpha()

                losses.append(-float(objective.mean()))
                value_losses.append(float(np.mean(value_error ** 2)))
                norms.append(norm)
                clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_range)))
                kls.append(float(np.mean(old_log_prob[idx] - log_prob)))

        policy.normalizer.update(np.stack([r.raw_features for r in records]))
        self.updates += 1
        return UpdateMetrics(
            policy_loss=float(np.mean(losses)) if losses else float("nan"),
            value_loss=float(np.mean(value_losses)) if value_losses else float("nan"),
            grad_norm=float(np.mean(norms)) if norms else float("nan"),
            clip_fraction=float(np.mean(clip_fracs)) if clip_fracs else float("nan"),
            approx_kl=float(np.mean(kls)) if kls else float("nan"),
            skipped=skipped,
            n_samples=size,
        )

    def _clip(self, grad: np.ndarray) -> float:
        """Scale ``grad`` in place to the global norm bound; returns the unclipped norm."""
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError("gradient contains NaN or inf")
        norm = float(np.linalg.norm(grad))
        if norm > self.config.max_grad_norm:
            grad *= self.config.max_grad_norm / norm
        return norm
