"""Tests for GAE, the clipped surrogate, Adam, rewards and the PPO update."""

import numpy as np
import pytest

from config.experiment import PpoConfig, RewardConfig
from src.control.dual_mode import LqrDesigner
from src.errors import NonFiniteGradientError
from src.policy.meta_policy import MetaPolicy
from src.policy.params import PolicyMode
from src.policy.state import FEATURE_DIM
from src.training.buffer import RolloutBuffer, TransitionRecord, gae, split_segments
from src.training.ppo import Adam, PpoTrainer, clipped_surrogate
from src.training.reward import reward

from .conftest import random_stable_pair


def brute_force_gae(rewards, values, gamma, lam):
    deltas = [rewards[t] + gamma * values[t + 1] - values[t] for t in range(len(rewards))]
    return np.array([
        sum((gamma * lam) ** (k - t) * deltas[k] for k in range(t, len(rewards)))
        for t in range(len(rewards))
    ])


def record(**fields) -> TransitionRecord:
    base = dict(features=np.zeros(FEATURE_DIM), raw_features=np.zeros(FEATURE_DIM), c=1, n=10, u=0.0,
                mean_M=0.0, plan=None, offset=0, feedforward=0.0, error=np.zeros(4), log_prob=0.0, value=0.0)
    base.update(fields)
    return TransitionRecord(**base)


class TestAdvantages:
    @pytest.mark.parametrize("seed", range(3))
    def test_gae_matches_double_sum(self, seed):
        rng = np.random.default_rng(seed)
        rewards = rng.standard_normal(25)
        values = rng.standard_normal(26)
        np.testing.assert_allclose(gae(rewards, values, 0.99, 0.9), brute_force_gae(rewards, values, 0.99, 0.9),
                                   atol=1e-12)

    def test_gae_requires_bootstrap_entry(self):
        with pytest.raises(ValueError):
            gae(np.zeros(3), np.zeros(3), 0.99, 0.9)

    def test_segments_bootstrap(self):
        buffer = RolloutBuffer(n_actors=1, gamma=0.5, gae_lambda=1.0)
        buffer.add(0, record(reward=1.0, value=0.0, terminated=True))
        buffer.add(0, record(reward=1.0, value=0.0, truncated=True, bootstrap_value=4.0))
        buffer.add(0, record(reward=0.0, value=0.0, bootstrap_value=2.0))
        assert len(split_segments(buffer.actors[0])) == 3
        buffer.compute_advantages()
        advantages = [r.advantage for r in buffer.records]
        assert advantages == pytest.approx([1.0, 3.0, 1.0])
        assert [r.ret for r in buffer.records] == pytest.approx(advantages)
        buffer.clear()
        assert len(buffer) == 0


class TestSurrogate:
    def test_inside_clip_range(self):
        objective, d_ratio = clipped_surrogate(np.array([1.1]), np.array([2.0]), 0.25)
        assert objective[0] == pytest.approx(2.2)
        assert d_ratio[0] == 2.0

    def test_positive_advantage_clipped_above(self):
        objective, d_ratio = clipped_surrogate(np.array([1.5]), np.array([2.0]), 0.25)
        assert objective[0] == pytest.approx(2.5)
        assert d_ratio[0] == 0.0

    def test_negative_advantage_clipped_below(self):
        objective, d_ratio = clipped_surrogate(np.array([0.5]), np.array([-2.0]), 0.25)
        assert objective[0] == pytest.approx(-1.5)
        assert d_ratio[0] == 0.0

    def test_pessimistic_side_is_not_clipped(self):
        objective, d_ratio = clipped_surrogate(np.array([1.5]), np.array([-2.0]), 0.25)
        assert objective[0] == pytest.approx(-3.0)
        assert d_ratio[0] == -2.0


class TestReward:
    def test_computation_penalty_over_episode(self):
        config = RewardConfig()
        total = sum(-reward(0.0, False, True, 40, t, 150, config).total for t in range(150))
        assert total == pytest.approx(60.0, abs=1e-9)

    def test_constraint_penalty_scales_with_remaining_steps(self):
        breakdown = reward(1.5, True, False, 0, 100, 150, RewardConfig())
        assert breakdown.constraint == pytest.approx(-500.0)
        assert breakdown.control == -1.5
        assert breakdown.computation == 0.0
        assert breakdown.cost == pytest.approx(501.5)
        assert breakdown.to_dict()["total"] == breakdown.total


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        adam = Adam(3, lr=0.1, eps=1e-12)
        params = adam.step(np.zeros(3), np.array([2.0, -0.5, 1e-3]))
        np.testing.assert_allclose(params, [-0.1, 0.1, -0.1], rtol=1e-6)

    def test_state_round_trip(self):
        adam = Adam(2)
        adam.step(np.zeros(2), np.ones(2))
        other = Adam(2)
        other.load_arrays(adam.state_arrays())
        assert other.t == 1
        np.testing.assert_array_equal(other.v, adam.v)


class TestTrainer:
    def make(self, lqr_weights, mode, seed=0, **ppo):
        policy = MetaPolicy(lqr_weights, np.array([0.1, 1.0]), head_hidden=(8,), value_hidden=(8,), mode=mode)
        policy.init_networks(np.random.default_rng(seed))
        policy.initialize(0.9, 20.0)
        A_s, B_s = random_stable_pair(np.random.default_rng(seed))
        designer = LqrDesigner(A_s, B_s, policy.lqr_weights)
        trainer = PpoTrainer(policy, designer, PpoConfig(**{"n_epochs": 3, **ppo}), np.random.default_rng(seed))
        return policy, trainer

    def computing_records(self, policy, count=16, seed=1):
        rng = np.random.default_rng(seed)
        records = []
        for _ in range(count):
            raw = rng.standard_normal(FEATURE_DIM)
            records.append(record(features=policy.normalizer(raw), raw_features=raw, n=int(rng.integers(5, 35)),
                                  u=float(rng.standard_normal()), mean_M=0.0))
        return records

    def test_fresh_records_have_unit_ratio(self, lqr_weights):
        policy, trainer = self.make(lqr_weights, PolicyMode.JOINT)
        records = self.computing_records(policy)
        stored = trainer.log_probs(records)
        for r, lp in zip(records, stored):
            r.log_prob = float(lp)
        np.testing.assert_allclose(np.exp(trainer.log_probs(records) - stored), 1.0, atol=1e-12)

    def test_update_touches_only_trainable_groups(self, lqr_weights):
        policy, trainer = self.make(lqr_weights, PolicyMode.HORIZON)
        records = self.computing_records(policy)
        for r, lp in zip(records, trainer.log_probs(records)):
            r.log_prob = float(lp)
            r.advantage = float(np.random.default_rng(r.n).standard_normal())
            r.ret = 1.0
        before = policy.params.vector.copy()
        value_before = policy.value_net.flat.copy()
        metrics = trainer.update(records)

        changed = policy.params.vector != before
        assert changed[policy.params.slices["theta_N"]].any()
        assert not changed[~policy.trainable_mask].any()
        assert not np.array_equal(policy.value_net.flat, value_before)
        assert metrics.n_samples == 16 and metrics.skipped == 0
        assert trainer.updates == 1
        assert np.isfinite(metrics.policy_loss) and np.isfinite(metrics.value_loss)
        assert policy.normalizer.count == 16

    def test_non_finite_gradient_is_rejected(self, lqr_weights):
        _, trainer = self.make(lqr_weights, PolicyMode.JOINT)
        with pytest.raises(NonFiniteGradientError):
            trainer._clip(np.array([1.0, np.nan]))

    def test_gradient_clipping(self, lqr_weights):
        _, trainer = self.make(lqr_weights, PolicyMode.JOINT)
        grad = np.array([3.0, 4.0])
        assert trainer._clip(grad) == pytest.approx(5.0)
        assert np.linalg.norm(grad) == pytest.approx(trainer.config.max_grad_norm)

    def test_update_with_longest_horizons_at_dispersion_floor(self, lqr_weights):
        policy, trainer = self.make(lqr_weights, PolicyMode.HORIZON, n_epochs=10)
        policy.params.set_group("alpha", -1.0)
        policy.clip_alpha()
        records = self.computing_records(policy, count=12)
        for r in records[:4]:
            r.n = policy.n_max
        stored = trainer.log_probs(records)
        assert np.all(np.isfinite(stored))
        rng = np.random.default_rng(3)
        for r, lp in zip(records, stored):
            r.log_prob = float(lp)
            r.advantage = float(rng.standard_normal())
            r.ret = 0.0

        metrics = trainer.update(records)
        assert metrics.skipped == 0
        assert np.isfinite(metrics.approx_kl) and np.isfinite(metrics.policy_loss)
        assert policy.alpha >= policy.alpha_floor
        assert np.all(np.isfinite(trainer.log_probs(records)))

    def surrogate(self, trainer, records, stored, adv) -> float:
        ratio = np.exp(trainer.log_probs(records) - stored)
        return float(clipped_surrogate(ratio, adv, trainer.config.clip_range)[0].mean())

    def scored_records(self, policy, trainer):
        records = self.computing_records(policy)
        stored = trainer.log_probs(records)
        raw = np.random.default_rng(4).standard_normal(len(records))
        for r, lp, a in zip(records, stored, raw):
            r.log_prob = float(lp)
            r.advantage = float(a)
            r.ret = 0.0
        return records, stored, (raw - raw.mean()) / (raw.std() + 1e-8)

    def test_surrogate_slope_along_gradient(self, lqr_weights):
        policy, trainer = self.make(lqr_weights, PolicyMode.JOINT)
        records, stored, adv = self.scored_records(policy, trainer)
        batch = trainer._batch(records, *trainer.branch_means(records))
        _, loss_grad = policy.log_prob_and_grad(batch, -adv / len(records))
        direction = -loss_grad
        base = policy.params.vector.copy()
        eps = 1e-6

        def at(theta):
            policy.params.vector[:] = theta
            return self.surrogate(trainer, records, stored, adv)

        slope = (at(base + eps * direction) - at(base - eps * direction)) / (2 * eps)
        policy.params.vector[:] = base
        assert slope == pytest.approx(direction @ direction, rel=1e-4)
        assert slope > 0.0

    def test_single_small_step_increases_surrogate(self, lqr_weights):
        policy, trainer = self.make(lqr_weights, PolicyMode.JOINT, n_epochs=1, learning_rate=1e-4)
        records, stored, adv = self.scored_records(policy, trainer)
        before = self.surrogate(trainer, records, stored, adv)
        assert before == pytest.approx(0.0, abs=1e-12)
        trainer.update(records)
        assert self.surrogate(trainer, records, stored, adv) > before
