"""Dual-mode control: stored MPC inputs plus LQR correction between computations.

The model dynamics are invariant to cart position, so the steady-state pair
(A_s, B_s) is linearized once at the origin and serves every reference.
"""

from dataclasses import dataclass

import numpy as np

from src.plant.dynamics import STATE_DIM

from .ocp_solver import OcpSolution, OcpSolver
from .riccati import LqrSolution, LqrWeights, init_weights, lqr_input, solve_lqr_trajectory, solve_steady_lqr


@dataclass
class LqrPlan:
    """An MPC solution together with the LQR gains designed along it."""
    solution: OcpSolution
    lqr: LqrSolution

    @property
    def horizon(self) -> int:
        return self.solution.horizon


@dataclass
class ControlLawOutput:
    """Means of both input branches at one step.

    ``feedforward`` is the stored MPC input (0 after the horizon) and ``error``
    the deviation the LQR acts on, so ``u_ML_mean = feedforward - K error``.
    """
    u_M_mean: float
    u_ML_mean: float
    feedforward: float
    error: np.ndarray
    offset: int
    within_horizon: bool


class LqrDesigner:
    """Builds LQR plans for fresh OCP solutions under the current weights."""

    def __init__(self, A_s: np.ndarray, B_s: np.ndarray, weights: LqrWeights):
        self.A_s = np.asarray(A_s, dtype=np.float64)
        self.B_s = np.asarray(B_s, dtype=np.float64)
        self._weights = weights
        self._steady: LqrSolution | None = None

    @property
    def weights(self) -> LqrWeights:
        return self._weights

    def set_weights(self, weights: LqrWeights) -> None:
        self._weights = weights
        self._steady = None

    def steady(self, with_gradients: bool = False) -> LqrSolution:
        if self._steady is None or (with_gradients and self._steady.grad_K_inf is None):
            self._steady = solve_steady_lqr(self.A_s, self.B_s, self._weights, with_gradients)
        return self._steady

    def plan(self, solution: OcpSolution, with_gradients: bool = False) -> LqrPlan:
        """Gains along the prediction, terminal condition from the steady state."""
        lqr = solve_lqr_trajectory(
            solution.A_seq, solution.B_seq, self._weights, self.steady(with_gradients), with_gradients
        )
        return LqrPlan(solution=solution, lqr=lqr)


def steady_state(psi_r: float) -> np.ndarray:
    x_s = np.zeros(STATE_DIM)
    x_s[0] = psi_r
    return x_s


def default_lqr_weights(solver: OcpSolver) -> LqrWeights:
    """Initial weights from the model stage-cost Hessians at the upright steady state."""
    return init_weights(solver.stage_cost_hessians, steady_state(0.0), 0.0)


def control_laws(steps_since: int, x_bar_t: np.ndarray, psi_r_t: float, plan: LqrPlan) -> ControlLawOutput:
    """Branch means ``steps_since`` periods after the last computation."""
    k = int(steps_since)
    x_bar_t = np.asarray(x_bar_t, dtype=np.float64)
    if k < plan.horizon:
        feedforward = float(plan.solution.u_seq[k])
        error = x_bar_t - plan.solution.x_pred[k]
        correction = float(lqr_input(plan.lqr.K_seq[k], error)[0])
        return ControlLawOutput(feedforward, feedforward + correction, feedforward, error, k, True)
    error = x_bar_t - steady_state(psi_r_t)
    correction = float(lqr_input(plan.lqr.K_inf, error)[0])
    return ControlLawOutput(0.0, correction, 0.0, error, k, False)


def gain_gradient(lqr: LqrSolution, offset: int) -> np.ndarray:
    """dK/dp of the gain used at ``offset``, shape (P, m, n)."""
    horizon = lqr.K_seq.shape[0]
    grad = lqr.grad_K[offset] if offset < horizon and lqr.grad_K is not None else None
    if offset >= horizon:
        grad = lqr.grad_K_inf
    if grad is None:
        raise ValueError("LQR design was built without gradients")
    return grad
