"""Optimal control: nonlinear OCP, Riccati machinery and dual-mode control laws."""

from .ocp_solver import OcpProblem, OcpSolution, OcpSolver, WarmStart, shift_warm_start
from .riccati import (
    LqrSolution,
    LqrWeights,
    backward_pass,
    grad_K_infinite,
    grad_K_timevarying,
    init_weights,
    lqr_input,
    solve_dare,
    solve_lqr_trajectory,
    solve_steady_lqr,
)
from .dual_mode import (
    ControlLawOutput,
    LqrDesigner,
    LqrPlan,
    control_laws,
    default_lqr_weights,
    gain_gradient,
    steady_state,
)

__all__ = [
    "OcpProblem",
    "OcpSolution",
    "OcpSolver",
    "WarmStart",
    "shift_warm_start",
    "LqrSolution",
    "LqrWeights",
    "backward_pass",
    "grad_K_infinite",
    "grad_K_timevarying",
    "init_weights",
    "lqr_input",
    "solve_dare",
    "solve_lqr_trajectory",
    "solve_steady_lqr",
    "ControlLawOutput",
    "LqrDesigner",
    "LqrPlan",
    "steady_state",
    "control_laws",
    "default_lqr_weights",
    "gain_gradient",
]
