"""Tests for the cart-pole model, its integrator and the episode holder."""

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import solve_ivp

from src.plant.dynamics import (
    PendulumParams,
    PlantState,
    check_constraints,
    clamp_input,
    derivatives,
    potential_energy,
    power,
    rk4_step,
    stage_cost,
    total_energy,
)
from src.plant.episode import (
    TRACE_COLUMNS,
    EpisodeConfig,
    PendulumEnv,
    sample_initial,
    sample_reference_schedule,
)


def integrate(x0, u, params, h, duration):
    x = np.array(x0, dtype=np.float64)
    for _ in range(int(round(duration / h))):
        x = rk4_step(x, u, params, dt=h)
    return x


class TestDynamics:
    def test_upright_and_hanging_are_equilibria(self, plant_params):
        np.testing.assert_allclose(rk4_step(np.zeros(4), 0.0, plant_params), np.zeros(4), atol=1e-14)
        hanging = np.array([0.0, 0.0, np.pi, 0.0])
        np.testing.assert_allclose(rk4_step(hanging, 0.0, plant_params), hanging, atol=1e-12)

    def test_matches_lagrangian_mass_matrix(self, plant_params):
        p = plant_params
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-2.0, 2.0, size=4)
            u = rng.uniform(-5.0, 5.0)
            _, v, phi, omega = x
            s, c = np.sin(phi), np.cos(phi)
            mass = np.array([[p.M, p.m * p.l * c], [p.m * p.l * c, 7.0 / 3.0 * p.m * p.l ** 2]])
            forces = np.array([
                u - p.mu_c * v + p.m * p.l * omega ** 2 * s,
                p.m * p.g * p.l * s - p.mu_p * omega,
            ])
            accel = np.linalg.solve(mass, forces)
            d = derivatives(x, u, p)
            np.testing.assert_allclose(d[[1, 3]], accel, rtol=1e-10, atol=1e-12)
            assert d[0] == v and d[2] == omega

    def test_rk4_is_fourth_order(self, plant_params):
        x0 = np.array([0.0, 0.5, 0.3, 0.2])
        u, duration = 1.0, 1.0
        exact = solve_ivp(lambda t, x: derivatives(x, u, plant_params), (0.0, duration), x0,
                          method="DOP853", rtol=1e-13, atol=1e-13).y[:, -1]
        coarse = np.linalg.norm(integrate(x0, u, plant_params, 0.05, duration) - exact)
        fine = np.linalg.norm(integrate(x0, u, plant_params, 0.025, duration) - exact)
        order = np.log2(coarse / fine)
        assert 3.7 < order < 4.3

    def test_energy_conserved_without_friction(self):
        params = PendulumParams(mu_c=0.0, mu_p=0.0)
        x = np.array([0.0, 0.3, 1.0, 0.0])
        energy = total_energy(x, params)
        for _ in range(100):
            x = rk4_step(x, 0.0, params)
            new_energy = total_energy(x, params)
            assert abs(new_energy - energy) < 1e-6
            energy = new_energy

    def test_power_is_energy_rate(self, plant_params):
        rng = np.random.default_rng(11)
        eps = 1e-6
        for _ in range(10):
            x = rng.uniform(-1.5, 1.5, size=4)
            u = rng.uniform(-5.0, 5.0)
            f = derivatives(x, u, plant_params)
            rate = (total_energy(x + eps * f, plant_params) - total_energy(x - eps * f, plant_params)) / (2 * eps)
            assert rate == pytest.approx(power(x, u, plant_params), abs=1e-7)

    def test_stage_cost_at_upright_rest(self, plant_params):
        cost = stage_cost(np.zeros(4), 0.0, 0.0, 0.0, plant_params)
        assert cost == pytest.approx(-10.0 * potential_energy(np.zeros(4), plant_params))
        assert cost == pytest.approx(-10.0 * 0.1 * 9.81 * 0.25)

    def test_stage_cost_terms(self, plant_params):
        base = stage_cost(np.zeros(4), 1.0, 1.0, 0.0, plant_params)
        assert stage_cost(np.zeros(4), 1.0, 0.0, 0.0, plant_params) - base == pytest.approx(0.1)
        assert stage_cost(np.array([0.5, 0, 0, 0]), 1.0, 1.0, 0.0, plant_params) - base == pytest.approx(2.5)

    def test_params_reject_inconsistent_masses(self):
        with pytest.raises(ValueError):
            PendulumParams(m=2.0, M=1.0)

    def test_plant_state_round_trip(self):
        state = PlantState(0.1, 0.2, 0.3, 0.4)
        assert PlantState.from_array(state.as_array()) == state
        assert not PlantState(np.nan, 0, 0, 0).is_finite()


class TestConstraints:
    def test_bound_is_admissible(self):
        assert check_constraints(np.array([2.0, 0, 0, 0]), 0.0).ok
        assert check_constraints(np.array([-2.0000001, 0, 0, 0]), 0.0).position_violation

    def test_nan_position_is_violation(self):
        assert check_constraints(np.array([np.nan, 0, 0, 0]), 0.0).position_violation

    def test_clamp_input(self):
        assert clamp_input(7.0) == 5.0
        assert clamp_input(-7.0) == -5.0
        assert clamp_input(1.5) == 1.5


class TestEpisode:
    def test_initial_state_distribution(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x0 = sample_initial(rng)
            assert x0[0] == 0.0
            assert abs(x0[1]) <= 1.0 and abs(x0[2]) <= np.pi and abs(x0[3]) <= 1.0

    def test_reference_redrawn_every_period(self):
        schedule = sample_reference_schedule(np.random.default_rng(1), EpisodeConfig())
        assert schedule.shape == (150,)
        for start in (0, 50, 100):
            assert np.all(schedule[start:start + 50] == schedule[start])
        assert schedule[0] != schedule[50] and schedule[50] != schedule[100]
        assert np.all(np.abs(schedule) <= 1.0)

    def test_truncates_at_horizon(self, plant_params):
        env = PendulumEnv(plant_params, EpisodeConfig(horizon=5, reference_period=5))
        env.reset(np.zeros(4), np.zeros(5))
        outcomes = [env.step(0.0) for _ in range(5)]
        assert [o.truncated for o in outcomes] == [False] * 4 + [True]
        assert not any(o.violated for o in outcomes)
        with pytest.raises(RuntimeError):
            env.step(0.0)

    def test_violation_ends_episode(self, plant_params):
        env = PendulumEnv(plant_params)
        env.reset(np.array([1.99, 3.0, 0.0, 0.0]), np.zeros(150))
        outcome = env.step(5.0)
        assert outcome.violated and outcome.done and not outcome.truncated

    def test_input_is_clamped(self, plant_params):
        env = PendulumEnv(plant_params)
        env.reset(np.zeros(4), np.zeros(150))
        assert env.step(12.0).u == 5.0
        assert env.u_prev == 5.0

    def test_reset_checks_schedule_length(self, plant_params):
        env = PendulumEnv(plant_params)
        with pytest.raises(ValueError):
            env.reset(np.zeros(4), np.zeros(10))

    def test_trace_export(self, plant_params, tmp_path):
        env = PendulumEnv(plant_params)
        env.reset_random(np.random.default_rng(4))
        env.step(1.0, computed=True, horizon=31)
        env.step(0.5)
        path = env.export_trace(tmp_path / "trace" / "episode.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == TRACE_COLUMNS
        assert frame["computed_flag"].tolist() == [1, 0]
        assert frame["horizon"].tolist() == [31, 0]
