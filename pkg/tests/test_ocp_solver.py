"""Tests for the multiple-shooting OCP and its warm starts."""

import numpy as np
import pytest
from scipy.optimize import minimize

from src.control.ocp_solver import (
    DIAGNOSTIC_COLUMNS,
    OcpProblem,
    OcpSolver,
    WarmStart,
    shift_warm_start,
)
from src.errors import OcpInfeasibleError
from src.plant.dynamics import rk4_step, stage_cost


class TestShiftWarmStart:
    def guess(self, horizon=5):
        return WarmStart(np.arange(horizon, dtype=float), np.arange(horizon + 1, dtype=float)[:, None] * np.ones(4))

    def test_drops_consumed_prefix(self):
        shifted = shift_warm_start(self.guess(), 2, 3)
        np.testing.assert_array_equal(shifted.u_guess, [2.0, 3.0, 4.0])
        np.testing.assert_array_equal(shifted.x_guess[:, 0], [2.0, 3.0, 4.0, 5.0])

    def test_pads_with_last_input(self):
        shifted = shift_warm_start(self.guess(), 3, 4, current_state=np.full(4, 9.0))
        np.testing.assert_array_equal(shifted.u_guess, [3.0, 4.0, 4.0, 4.0])
        np.testing.assert_array_equal(shifted.x_guess[0], np.full(4, 9.0))
        assert shifted.x_guess.shape == (5, 4)

    def test_fully_consumed_gives_zero_inputs(self):
        shifted = shift_warm_start(self.guess(), 7, 3, current_state=np.ones(4))
        np.testing.assert_array_equal(shifted.u_guess, np.zeros(3))
        np.testing.assert_array_equal(shifted.x_guess, np.ones((4, 4)))

    def test_negative_offset(self):
        with pytest.raises(ValueError):
            shift_warm_start(self.guess(), -1, 3)


class TestSolver:
    def test_upright_equilibrium(self, ocp_solver):
        solution = ocp_solver.solve(OcpProblem(x0=np.zeros(4), reference=0.0, horizon=10))
        assert solution.converged
        assert np.max(np.abs(solution.u_seq)) < 1e-4
        assert solution.kkt_residual <= 1e-6
        assert solution.x_pred.shape == (11, 4)
        assert solution.A_seq.shape == (10, 4, 4) and solution.B_seq.shape == (10, 4, 1)

    def test_matches_brute_force_for_two_steps(self, ocp_solver, model_params):
        x0 = np.array([0.1, 0.05, 0.05, -0.02])
        problem = OcpProblem(x0=x0, reference=0.2, horizon=2, u_prev=0.1)
        solution = ocp_solver.solve(problem)

        def objective(u):
            x1 = rk4_step(x0, u[0], model_params)
            return (stage_cost(x0, u[0], 0.1, 0.2, model_params)
                    + stage_cost(x1, u[1], u[0], 0.2, model_params))

        oracle = minimize(objective, np.zeros(2), method="BFGS", options={"gtol": 1e-11})
        np.testing.assert_allclose(solution.u_seq, oracle.x, atol=1e-5)
        assert solution.objective == pytest.approx(oracle.fun, abs=1e-7)
        assert ocp_solver.transcribed_objective(problem, solution.u_seq, solution.x_pred) == \
            pytest.approx(solution.objective, abs=1e-10)

    @pytest.mark.slow
    def test_swing_up_respects_bounds(self, ocp_solver):
        problem = OcpProblem(x0=np.array([0.0, 0.0, np.pi, 0.0]), reference=0.5, horizon=25)
        solution = ocp_solver.solve(problem)
        assert np.all(np.abs(solution.u_seq) <= 5.0)
        assert np.all(np.abs(solution.x_pred[:, 0]) <= 2.0 + 1e-6)
        assert solution.kkt_residual <= 1e-6 or not solution.converged

    def test_warm_start_from_previous_solution(self, ocp_solver):
        first = ocp_solver.solve(OcpProblem(x0=np.array([0.0, 0.2, 0.3, 0.0]), reference=0.0, horizon=8))
        x1 = first.x_pred[1]
        warm = shift_warm_start(first, 1, 12, current_state=x1)
        second = ocp_solver.solve(OcpProblem(x0=x1, reference=0.0, horizon=12, u_prev=first.u_seq[0]), warm)
        assert second.horizon == 12
        np.testing.assert_array_equal(second.x_pred[0], x1)

    def test_infeasible_initial_position(self, ocp_solver):
        with pytest.raises(OcpInfeasibleError):
            ocp_solver.solve(OcpProblem(x0=np.array([2.5, 0.0, 0.0, 0.0]), reference=0.0, horizon=5))

    @pytest.mark.parametrize("horizon", [0, 41])
    def test_horizon_out_of_range(self, ocp_solver, horizon):
        with pytest.raises(ValueError):
            ocp_solver.solve(OcpProblem(x0=np.zeros(4), reference=0.0, horizon=horizon))

    def test_predict_and_linearization(self, ocp_solver, model_params):
        x = np.array([0.1, -0.2, 0.4, 0.3])
        np.testing.assert_allclose(ocp_solver.model_step(x, 0.7), rk4_step(x, 0.7, model_params), atol=1e-12)
        A, B = ocp_solver.linearize_trajectory(x[None], np.array([0.7]))
        eps = 1e-6
        for j in range(4):
            step = np.zeros(4)
            step[j] = eps
            fd = (rk4_step(x + step, 0.7, model_params) - rk4_step(x - step, 0.7, model_params)) / (2 * eps)
            np.testing.assert_allclose(A[0][:, j], fd, atol=1e-7)
        fd_u = (rk4_step(x, 0.7 + eps, model_params) - rk4_step(x, 0.7 - eps, model_params)) / (2 * eps)
        np.testing.assert_allclose(B[0][:, 0], fd_u, atol=1e-7)
        np.testing.assert_allclose(ocp_solver.predict(x, np.array([0.7, 0.0]))[1], rk4_step(x, 0.7, model_params))

    def test_stage_cost_hessians_at_upright(self, ocp_solver):
        H_x, H_u = ocp_solver.stage_cost_hessians(np.zeros(4))
        assert H_u[0, 0] == pytest.approx(0.2)
        assert H_x[0, 0] == pytest.approx(20.0)
        assert np.all(np.linalg.eigvalsh(H_x) > 0)

    def test_diagnostics(self, model_params, tmp_path):
        solver = OcpSolver(model=model_params, record_diagnostics=True)
        solver.solve(OcpProblem(x0=np.zeros(4), reference=0.0, horizon=3), step=0)
        solver.solve(OcpProblem(x0=np.zeros(4), reference=0.1, horizon=4), step=1)
        frame = solver.diagnostics_frame()
        assert list(frame.columns) == DIAGNOSTIC_COLUMNS
        assert frame["N"].tolist() == [3, 4]
        assert solver.export_diagnostics(tmp_path / "solves.csv").exists()

    def test_rejects_bad_discount(self, model_params):
        with pytest.raises(ValueError):
            OcpSolver(model=model_params, discount=0.0)

    def test_from_experiment(self, small_config):
        solver = OcpSolver.from_experiment(small_config)
        assert solver.n_max == 12
        assert solver.model.M == 1.5


class TestOptimality:
    def test_objective_not_worse_than_feasible_guess(self, ocp_solver):
        problem = OcpProblem(x0=np.array([0.1, 0.05, 0.05, -0.02]), reference=0.2, horizon=10, u_prev=0.1)
        u_guess = np.zeros(problem.horizon)
        x_guess = ocp_solver.predict(problem.x0, u_guess)
        guess_cost = ocp_solver.transcribed_objective(problem, u_guess, x_guess)
        solution = ocp_solver.solve(problem, WarmStart(u_guess, x_guess))
        assert solution.converged
        assert solution.objective <= guess_cost + 1e-9

    def test_longer_horizon_never_costs_more_near_upright(self, ocp_solver):
        x0 = np.array([0.05, 0.0, 0.05, 0.0])
        objectives = [ocp_solver.solve(OcpProblem(x0=x0, reference=0.0, horizon=n)).objective
                      for n in (2, 4, 8, 16, 32)]
        assert np.all(np.diff(objectives) <= 1e-6)

    @pytest.mark.slow
    def test_shifted_warm_start_needs_fewer_iterations(self, ocp_solver):
        first = ocp_solver.solve(OcpProblem(x0=np.array([0.0, 0.0, np.pi, 0.0]), reference=0.5, horizon=25))
        x1 = first.x_pred[1]
        problem = OcpProblem(x0=x1, reference=0.5, horizon=25, u_prev=first.u_seq[0])
        cold = ocp_solver.solve(problem)
        warm = ocp_solver.solve(problem, shift_warm_start(first, 1, 25, current_state=x1))
        assert warm.iterations < cold.iterations

    @pytest.mark.slow
    def test_prediction_drifts_from_true_plant(self, ocp_solver, plant_params):
        x0 = np.array([0.0, 0.0, np.pi, 0.0])
        solution = ocp_solver.solve(OcpProblem(x0=x0, reference=0.5, horizon=25))
        np.testing.assert_allclose(ocp_solver.predict(x0, solution.u_seq), solution.x_pred, atol=1e-6)
        true_states = [x0]
        for u in solution.u_seq:
            true_states.append(rk4_step(true_states[-1], u, plant_params))
        divergence = np.abs(np.vstack(true_states) - solution.x_pred).max(axis=1)
        assert divergence[0] == 0.0
        assert divergence[-1] > 1e-3
