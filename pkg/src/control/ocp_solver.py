"""Adaptive-horizon nonlinear OCP: multiple-shooting transcription solved by IPOPT.

The model integrator and stage cost are built symbolically with casadi from the
same formulas as the plant, so the transcription, its Jacobians and the plant
simulation cannot drift apart.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import casadi as ca
import numpy as np
import pandas as pd

from src.errors import OcpInfeasibleError, OcpSolverFailure
from src.plant.dynamics import (
    INPUT_DIM,
    STATE_DIM,
    PendulumParams,
    StageCostWeights,
    pendulum_rhs,
    stage_cost_expr,
)

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ["step", "N", "iterations", "kkt_residual", "solve_time", "converged"]


@dataclass(frozen=True)
class OcpProblem:
    """One OCP instance.

    Attributes:
        x0: Measured state the prediction starts from
        reference: Position reference, scalar or one value per stage
        horizon: Prediction horizon N
        u_prev: Input applied in the previous period (anchors the first du)
    """
    x0: np.ndarray
    reference: float | np.ndarray
    horizon: int
    u_prev: float = 0.0

    def reference_sequence(self) -> np.ndarray:
        ref = np.broadcast_to(np.asarray(self.reference, dtype=np.float64), (self.horizon,))
        return np.array(ref)

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.x0, dtype=np.float64), [self.u_prev], self.reference_sequence()])


@dataclass
class WarmStart:
    """Primal initial guess for the transcribed NLP."""
    u_guess: np.ndarray  # (N,)
    x_guess: np.ndarray  # (N+1, 4)

    @property
    def horizon(self) -> int:
        return len(self.u_guess)


@dataclass
class OcpSolution:
    """Locally optimal solution with along-trajectory linearizations."""
    u_seq: np.ndarray                 # (N,)
    x_pred: np.ndarray                # (N+1, 4), x_pred[0] is the measured state
    A_seq: np.ndarray                 # (N, 4, 4)
    B_seq: np.ndarray                 # (N, 4, 1)
    objective: float
    kkt_residual: float
    iterations: int
    solve_time: float
    converged: bool
    status: str
    reference: np.ndarray             # (N,)
    u_prev: float = 0.0

    @property
    def horizon(self) -> int:
        return len(self.u_seq)

    @property
    def suboptimal(self) -> bool:
        return not self.converged


def shift_warm_start(
    previous: OcpSolution | WarmStart,
    steps_elapsed: int,
    new_horizon: int,
    current_state: np.ndarray | None = None,
) -> WarmStart:
    """Shift a previous solution forward in time and fit it to a new horizon.

    Args:
        previous: Solution (or guess) computed ``steps_elapsed`` periods ago
        steps_elapsed: Periods executed since that computation
        new_horizon: Horizon of the upcoming solve
        current_state: Measured state replacing the first guessed state

    Returns:
        Guess whose inputs drop the consumed prefix and repeat the last input
        to fill the tail; fully consumed solutions give zero inputs
    """
    if steps_elapsed < 0:
        raise ValueError("steps_elapsed must be non-negative")
    u_prev_seq = np.asarray(previous.u_seq if isinstance(previous, OcpSolution) else previous.u_guess)
    x_prev = np.asarray(previous.x_pred if isinstance(previous, OcpSolution) else previous.x_guess)
    n_old = len(u_prev_seq)

    if steps_elapsed >= n_old:
        anchor = np.asarray(current_state if current_state is not None else x_prev[-1], dtype=np.float64)
        return WarmStart(np.zeros(new_horizon), np.tile(anchor, (new_horizon + 1, 1)))

    u_rest = u_prev_seq[steps_elapsed:]
    x_rest = x_prev[steps_elapsed:]
    if len(u_rest) >= new_horizon:
        u_guess = u_rest[:new_horizon].copy()
        x_guess = x_rest[: new_horizon + 1].copy()
    else:
        pad = new_horizon - len(u_rest)
        u_guess = np.concatenate([u_rest, np.full(pad, u_rest[-1])])
        x_guess = np.vstack([x_rest, np.tile(x_rest[-1], (pad, 1))])
    if current_state is not None:
        x_guess[0] = current_state
    return WarmStart(u_guess, x_guess)


@dataclass
class _Transcription:
    solver: Any
    objective: Any
    grad_f: Any
    jac_g: Any
    lbx: np.ndarray
    ubx: np.ndarray
    n_constraints: int


@dataclass
class OcpSolver:
    """Per-worker OCP solver with one cached transcription per horizon.

    Attributes:
        model: MPC model parameters (not the plant truth)
        weights: Stage-cost weights
        n_min, n_max: Admissible horizon range
        discount: Stage discount rho in (0, 1]
        max_iter: IPOPT iteration cap
        tol: IPOPT tolerance
        kkt_tol: Unscaled KKT residual regarded as converged
        input_limit, position_limit: Box bounds of the OCP
        record_diagnostics: Keep one row per solve for CSV export
    """
    model: PendulumParams
    weights: StageCostWeights = field(default_factory=StageCostWeights)
    n_min: int = 1
    n_max: int = 40
    discount: float = 1.0
    max_iter: int = 200
    tol: float = 1e-9
    kkt_tol: float = 1e-6
    input_limit: float = 5.0
    position_limit: float = 2.0
    record_diagnostics: bool = False

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        self._transcriptions: dict[int, _Transcription] = {}
        self.diagnostics: list[dict] = []
        self._build_model_functions()

    @classmethod
    def from_experiment(cls, config, **kwargs) -> "OcpSolver":
        """Build a solver from an ExperimentConfig."""
        return cls(
            model=config.model,
            weights=config.cost,
            n_min=config.mpc.n_min,
            n_max=config.mpc.n_max,
            discount=config.mpc.discount,
            max_iter=config.mpc.max_iter,
            tol=config.mpc.tol,
            kkt_tol=config.mpc.kkt_tol,
            input_limit=config.episode.input_limit,
            position_limit=config.episode.position_limit,
            **kwargs,
        )

    def _build_model_functions(self) -> None:
        x = ca.SX.sym("x", STATE_DIM)
        u = ca.SX.sym("u", INPUT_DIM)
        u_prev = ca.SX.sym("u_prev", INPUT_DIM)
        ref = ca.SX.sym("ref")
        h = self.model.dt

        def f(z):
            return ca.vertcat(*pendulum_rhs(z, u, self.model, ca.sin, ca.cos))

        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x_next = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

        self._step = ca.Function("rk4_step", [x, u], [x_next])
        self._jac = ca.Function("rk4_jac", [x, u], [ca.jacobian(x_next, x), ca.jacobian(x_next, u)])
        cost = stage_cost_expr(x, u, u_prev, ref, self.model, self.weights, ca.cos)
        self._cost = ca.Function("stage_cost", [x, u, u_prev, ref], [cost])
        self._cost_hessians = ca.Function(
            "stage_cost_hessians", [x, u, u_prev, ref],
            [ca.hessian(cost, x)[0], ca.hessian(cost, u)[0]],
        )

    def _transcription(self, horizon: int) -> _Transcription:
        if horizon not in self._transcriptions:
            self._transcriptions[horizon] = self._transcribe(horizon)
        return self._transcriptions[horizon]

    def _transcribe(self, horizon: int) -> _Transcription:
        n = horizon
        U = ca.SX.sym("U", n)
        X = ca.SX.sym("X", STATE_DIM, n)
        P = ca.SX.sym("P", STATE_DIM + 1 + n)
        x_k, u_last = P[:STATE_DIM], P[STATE_DIM]

        objective = 0
        defects = []
        for k in range(n):
            objective += self.discount ** k * self._cost(x_k, U[k], u_last, P[STATE_DIM + 1 + k])
            defects.append(X[:, k] - self._step(x_k, U[k]))
            x_k, u_last = X[:, k], U[k]

        w = ca.vertcat(U, ca.reshape(X, -1, 1))
        g = ca.vertcat(*defects)
        opts = {
            "ipopt.print_level": 0,
            "ipopt.sb": "yes",
            "print_time": False,
            "error_on_fail": False,
            "ipopt.max_iter": self.max_iter,
            "ipopt.tol": self.tol,
        }
        solver = ca.nlpsol(f"ocp_N{n}", "ipopt", {"x": w, "f": objective, "g": g, "p": P}, opts)

        state_lb = np.array([-self.position_limit, -np.inf, -np.inf, -np.inf])
        lbx = np.concatenate([np.full(n, -self.input_limit), np.tile(state_lb, n)])
        ubx = -lbx
        return _Transcription(
            solver=solver,
            objective=ca.Function("objective", [w, P], [objective]),
            grad_f=ca.Function("grad_f", [w, P], [ca.gradient(objective, w)]),
            jac_g=ca.Function("jac_g", [w, P], [ca.jacobian(g, w)]),
            lbx=lbx,
            ubx=ubx,
            n_constraints=g.shape[0],
        )

    def cold_start(self, problem: OcpProblem) -> WarmStart:
        x0 = np.asarray(problem.x0, dtype=np.float64)
        return WarmStart(np.zeros(problem.horizon), np.tile(x0, (problem.horizon + 1, 1)))

    def solve(
        self,
        problem: OcpProblem,
        warm_start: WarmStart | OcpSolution | None = None,
        step: int | None = None,
    ) -> OcpSolution:
        """Solve the OCP from the measured state.

        Args:
            problem: OCP instance
            warm_start: Guess already aligned with the current time; fitted
                to ``problem.horizon`` when its length differs
            step: Episode step, only used for the diagnostics log

        Returns:
            The solution; ``converged`` is False when IPOPT stopped early

        Raises:
            OcpInfeasibleError: If the measured position is already outside the bound
            OcpSolverFailure: If IPOPT returns a non-finite iterate
        """
        n = problem.horizon
        if not self.n_min <= n <= self.n_max:
            raise ValueError(f"horizon {n} outside [{self.n_min}, {self.n_max}]")
        x0 = np.asarray(problem.x0, dtype=np.float64)
        if not np.all(np.isfinite(x0)):
            raise OcpSolverFailure("initial state is not finite")
        if abs(x0[0]) > self.position_limit:
            raise OcpInfeasibleError(f"initial position {x0[0]:.4f} violates |psi| <= {self.position_limit}")

        if warm_start is None:
            guess = self.cold_start(problem)
        elif isinstance(warm_start, OcpSolution) or warm_start.horizon != n:
            guess = shift_warm_start(warm_start, 0, n, current_state=x0)
        else:
            guess = warm_start

        tr = self._transcription(n)
        p = problem.parameter_vector()
        w0 = np.concatenate([np.clip(guess.u_guess, -self.input_limit, self.input_limit),
                             np.asarray(guess.x_guess)[1:].reshape(-1)])

        started = time.perf_counter()
        try:
            result = tr.solver(x0=w0, p=p, lbx=tr.lbx, ubx=tr.ubx, lbg=0.0, ubg=0.0)
        except RuntimeError as exc:
            raise OcpSolverFailure(f"IPOPT failed for N={n}: {exc}") from exc
        solve_time = time.perf_counter() - started
        stats = tr.solver.stats()

        w = np.asarray(result["x"], dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)):
            raise OcpSolverFailure(f"IPOPT returned a non-finite iterate for N={n}")
        u_seq = np.clip(w[:n], -self.input_limit, self.input_limit)
        x_pred = np.vstack([x0, w[n:].reshape(n, STATE_DIM)])
        kkt = self._kkt_residual(tr, w, p, result)
        A_seq, B_seq = self.linearize_trajectory(x_pred, u_seq)

        converged = bool(stats.get("success", False))
        status = str(stats.get("return_status", "unknown"))
        if not converged:
            logger.warning("OCP N=%d stopped with status %s after %s iterations", n, status, stats.get("iter_count"))
        elif kkt > self.kkt_tol:
            logger.debug("OCP N=%d converged with unscaled KKT residual %.2e", n, kkt)

        solution = OcpSolution(
            u_seq=u_seq,
            x_pred=x_pred,
            A_seq=A_seq,
            B_seq=B_seq,
            objective=float(result["f"]),
            kkt_residual=kkt,
            iterations=int(stats.get("iter_count", -1)),
            solve_time=solve_time,
            converged=converged,
            status=status,
            reference=problem.reference_sequence(),
            u_prev=problem.u_prev,
        )
        if self.record_diagnostics:
            self.diagnostics.append({
                "step": -1 if step is None else step, "N": n, "iterations": solution.iterations,
                "kkt_residual": kkt, "solve_time": solve_time, "converged": converged,
            })
        return solution

    @staticmethod
    def _kkt_residual(tr: _Transcription, w: np.ndarray, p: np.ndarray, result: dict) -> float:
        grad = np.asarray(tr.grad_f(w, p)).ravel()
        jac = np.asarray(tr.jac_g(w, p))
        lam_g = np.asarray(result["lam_g"]).ravel()
        lam_x = np.asarray(result["lam_x"]).ravel()
        stationarity = grad + jac.T @ lam_g + lam_x
        g = np.asarray(result["g"]).ravel()
        bound_violation = np.maximum(np.maximum(tr.lbx - w, w - tr.ubx), 0.0)
        primal = max(np.max(np.abs(g), initial=0.0), np.max(bound_violation, initial=0.0))
        return float(max(np.max(np.abs(stationarity)), primal))

    def transcribed_objective(self, problem: OcpProblem, u_seq: np.ndarray, x_pred: np.ndarray) -> float:
        """Objective of the transcribed NLP at an arbitrary primal point."""
        tr = self._transcription(problem.horizon)
        w = np.concatenate([np.asarray(u_seq, dtype=np.float64), np.asarray(x_pred)[1:].reshape(-1)])
        return float(tr.objective(w, problem.parameter_vector()))

    def predict(self, x0: np.ndarray, u_seq: np.ndarray) -> np.ndarray:
        """Roll the MPC model forward under an input sequence."""
        states = [np.asarray(x0, dtype=np.float64)]
        for u in u_seq:
            states.append(np.asarray(self._step(states[-1], u)).ravel())
        return np.vstack(states)

    def model_step(self, x: np.ndarray, u: float) -> np.ndarray:
        return np.asarray(self._step(x, u)).ravel()

    def linearize_trajectory(self, x_pred: np.ndarray, u_seq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians of the model RK4 step at (x_pred[k], u_seq[k]) for k < N."""
        n = len(u_seq)
        A_seq = np.empty((n, STATE_DIM, STATE_DIM))
        B_seq = np.empty((n, STATE_DIM, INPUT_DIM))
        for k in range(n):
            A, B = self._jac(x_pred[k], u_seq[k])
            A_seq[k] = np.asarray(A)
            B_seq[k] = np.asarray(B).reshape(STATE_DIM, INPUT_DIM)
        return A_seq, B_seq

    def linearize(self, solution: OcpSolution) -> tuple[np.ndarray, np.ndarray]:
        return self.linearize_trajectory(solution.x_pred, solution.u_seq)

    def linearize_steady(self, x_s: np.ndarray, u_s: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians of the model step at a steady state."""
        A, B = self._jac(np.asarray(x_s, dtype=np.float64), u_s)
        return np.asarray(A), np.asarray(B).reshape(STATE_DIM, INPUT_DIM)

    def stage_cost_hessians(self, x_s: np.ndarray, u_s: float = 0.0, reference: float | None = None):
        """Hessians of the model stage cost w.r.t. state and input at a steady state."""
        ref = float(x_s[0]) if reference is None else reference
        H_x, H_u = self._cost_hessians(np.asarray(x_s, dtype=np.float64), u_s, u_s, ref)
        return np.asarray(H_x), np.asarray(H_u).reshape(INPUT_DIM, INPUT_DIM)

    def diagnostics_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.diagnostics, columns=DIAGNOSTIC_COLUMNS)

    def export_diagnostics(self, path: Path) -> Path:
        """Write the per-solve diagnostics CSV."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.diagnostics_frame().to_csv(path, index=False)
        return path
