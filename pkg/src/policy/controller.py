"""Event-triggered dual-mode controller driven by a meta-policy.

Each rollout worker owns one controller: its OCP solver, its LQR designer and
the plan of the last computation. The policy object is only read.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from src.control.dual_mode import LqrDesigner, LqrPlan, control_laws
from src.control.ocp_solver import OcpProblem, OcpSolution, OcpSolver, shift_warm_start
from src.control.riccati import LqrWeights
from src.plant.dynamics import STATE_DIM, clamp_input

from .meta_policy import Decision
from .state import Action, AugmentedState

logger = logging.getLogger(__name__)


class DecisionSource(Protocol):
    """What the controller needs from a policy."""

    @property
    def lqr_weights(self) -> LqrWeights: ...

    @property
    def initial_horizon(self) -> int: ...

    def decide(self, s: AugmentedState, rng: np.random.Generator, deterministic: bool = False) -> Decision: ...

    def sample_input(self, mean: float, c: int, rng: np.random.Generator, deterministic: bool = False) -> float: ...

    def decision_log_prob(self, decision: Decision, u: float, mean: float, deterministic: bool = False) -> float: ...


@dataclass
class ControlStep:
    """One executed control period.

    ``plan``, ``offset``, ``feedforward`` and ``error`` let the trainer
    recompute the ``u_ML`` mean under new LQR weights.
    """
    action: Action
    decision: Decision | None
    plan: LqrPlan
    offset: int
    feedforward: float
    error: np.ndarray
    solve_time: float = 0.0
    overhead_time: float = 0.0

    @property
    def computed(self) -> bool:
        return self.action.c == 1


@dataclass
class ControllerTiming:
    ocp: float = 0.0
    overhead: float = 0.0
    solves: int = 0


@dataclass
class MetaController:
    """Executes meta-decisions against the OCP solver and the LQR designer.

    Attributes:
        solver: OCP solver on the MPC model
        designer: LQR designer holding the steady-state linearization
        n_max: Horizon of the computation at episode start
        input_limit: Executed inputs are clamped to this bound
    """
    solver: OcpSolver
    designer: LqrDesigner
    n_max: int = 40
    input_limit: float = 5.0
    timing: ControllerTiming = field(default_factory=ControllerTiming)

    def __post_init__(self):
        self.plan: LqrPlan | None = None

    @classmethod
    def build(cls, solver: OcpSolver, weights: LqrWeights, input_limit: float = 5.0) -> "MetaController":
        A_s, B_s = solver.linearize_steady(np.zeros(STATE_DIM))
        return cls(solver=solver, designer=LqrDesigner(A_s, B_s, weights), n_max=solver.n_max,
                   input_limit=input_limit)

    def begin_episode(self, x0: np.ndarray, psi_r: float, weights: LqrWeights, u_prev: float = 0.0,
                      horizon: int | None = None) -> tuple[AugmentedState, ControlStep]:
        """Deterministic computation for t = 0, at the longest horizon unless ``horizon`` is given."""
        n = self.n_max if horizon is None else int(horizon)
        self.plan = None
        self.timing = ControllerTiming()
        self.designer.set_weights(weights)
        s = AugmentedState.at_computation(x0, psi_r, n)
        step = self.execute(s, c=1, n=n, u_prev=u_prev, step_index=0)
        return s.recomputed(n), step

    def refresh_weights(self, weights: LqrWeights) -> None:
        """Adopt new LQR weights, redesigning the gains of the running plan."""
        self.designer.set_weights(weights)
        if self.plan is not None:
            self.plan = self.designer.plan(self.plan.solution)

    def snapshot(self) -> dict[str, np.ndarray]:
        """Timing and the stored MPC solution; gains are redesigned on restore."""
        arrays = {"timing": np.array([self.timing.ocp, self.timing.overhead, self.timing.solves])}
        if self.plan is not None:
            sol = self.plan.solution
            arrays.update({
                "plan/u_seq": sol.u_seq, "plan/x_pred": sol.x_pred, "plan/A_seq": sol.A_seq,
                "plan/B_seq": sol.B_seq, "plan/reference": sol.reference,
                "plan/info": np.array([sol.objective, sol.kkt_residual, sol.iterations, sol.solve_time,
                                       float(sol.converged), sol.u_prev]),
            })
        return arrays

    def restore(self, arrays: dict[str, np.ndarray], weights: LqrWeights) -> None:
        ocp, overhead, solves = arrays["timing"]
        self.timing = ControllerTiming(ocp=float(ocp), overhead=float(overhead), solves=int(solves))
        self.designer.set_weights(weights)
        self.plan = None
        if "plan/u_seq" in arrays:
            objective, kkt, iterations, solve_time, converged, u_prev = arrays["plan/info"]
            solution = OcpSolution(
                u_seq=np.array(arrays["plan/u_seq"]), x_pred=np.array(arrays["plan/x_pred"]),
                A_seq=np.array(arrays["plan/A_seq"]), B_seq=np.array(arrays["plan/B_seq"]),
                objective=float(objective), kkt_residual=float(kkt), iterations=int(iterations),
                solve_time=float(solve_time), converged=bool(converged), status="restored",
                reference=np.array(arrays["plan/reference"]), u_prev=float(u_prev),
            )
            self.plan = self.designer.plan(solution)

    def act(
        self,
        policy: DecisionSource,
        s: AugmentedState,
        rng: np.random.Generator,
        u_prev: float,
        deterministic: bool = False,
        step_index: int | None = None,
    ) -> ControlStep:
        """Draw and execute a meta-action at state ``s``."""
        started = time.perf_counter()
        decision = policy.decide(s, rng, deterministic)
        step = self._branch(s, decision.c, decision.n, u_prev, step_index)
        u = policy.sample_input(step.action.mean, decision.c, rng, deterministic)
        step.action.u_sampled = u
        step.action.u_executed = clamp_input(u, self.input_limit)
        step.action.log_prob = policy.decision_log_prob(decision, u, step.action.mean, deterministic)
        step.decision = decision
        step.overhead_time = time.perf_counter() - started - step.solve_time
        self.timing.overhead += step.overhead_time
        return step

    def execute(self, s: AugmentedState, c: int, n: int, u_prev: float,
                step_index: int | None = None) -> ControlStep:
        """Execute a fixed meta-decision with the branch mean as input."""
        started = time.perf_counter()
        step = self._branch(s, c, n, u_prev, step_index)
        step.overhead_time = time.perf_counter() - started - step.solve_time
        self.timing.overhead += step.overhead_time
        return step

    def _branch(self, s: AugmentedState, c: int, n: int, u_prev: float, step_index: int | None) -> ControlStep:
        if c == 1:
            warm = None
            if self.plan is not None:
                warm = shift_warm_start(self.plan.solution, s.steps_since, n, current_state=s.x_bar_t)
            problem = OcpProblem(x0=s.x_bar_t, reference=s.p_hat_t, horizon=n, u_prev=u_prev)
            solution = self.solver.solve(problem, warm_start=warm, step=step_index)
            self.plan = self.designer.plan(solution)
            self.timing.ocp += solution.solve_time
            self.timing.solves += 1
            mean = float(solution.u_seq[0])
            action = Action(c=1, n=n, u_sampled=mean, u_executed=clamp_input(mean, self.input_limit),
                            mean=mean, log_prob=0.0)
            return ControlStep(action=action, decision=None, plan=self.plan, offset=0, feedforward=mean,
                               error=np.zeros(STATE_DIM), solve_time=solution.solve_time)

        if self.plan is None:
            raise RuntimeError("no MPC computation to fall back on; call begin_episode() first")
        laws = control_laws(s.steps_since, s.x_bar_t, s.p_hat_t, self.plan)
        mean = laws.u_ML_mean
        action = Action(c=0, n=s.N_i, u_sampled=mean, u_executed=clamp_input(mean, self.input_limit),
                        mean=mean, log_prob=0.0)
        return ControlStep(action=action, decision=None, plan=self.plan, offset=laws.offset,
                           feedforward=laws.feedforward, error=laws.error)
