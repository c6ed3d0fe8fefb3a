"""Cart-pole dynamics, RK4 discretization, energies and the stage cost.

State vectors are ordered ``[psi, v, phi, omega]`` with ``phi = 0`` upright.
The symbolic helpers take the ``sin``/``cos`` implementations as arguments so
that the numpy plant and the casadi OCP transcription share one formula.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

STATE_DIM = 4
INPUT_DIM = 1
STATE_NAMES = ("psi", "v", "phi", "omega")

# Rod inertia about the pivot in units of m * l**2
INERTIA_FACTOR = 7.0 / 3.0


class PendulumParams(BaseModel):
    """Physical parameters of the cart-pole (defaults are the true plant)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    m: float = Field(0.1, gt=0.0, description="Pendulum mass (kg)")
    M: float = Field(1.1, gt=0.0, description="Total mass (kg)")
    g: float = Field(9.81, description="Gravity (m/s^2)")
    l: float = Field(0.25, gt=0.0, description="Half pendulum length (m)")
    mu_c: float = Field(0.01, ge=0.0, description="Cart friction")
    mu_p: float = Field(0.001, ge=0.0, description="Pendulum friction")
    dt: float = Field(0.04, gt=0.0, description="Discretization step (s)")

    @model_validator(mode="after")
    def _check_masses(self) -> "PendulumParams":
        if self.M <= self.m:
            raise ValueError("total mass M must exceed pendulum mass m")
        return self


class StageCostWeights(BaseModel):
    """Weights of the pendulum stage cost."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    potential_weight: float = Field(10.0, description="Weight on -E_p")
    position_weight: float = Field(10.0, ge=0.0, description="Weight on (psi - psi_r)^2")
    input_change_weight: float = Field(0.1, ge=0.0, description="D in du * D * du")


@dataclass(frozen=True)
class PlantState:
    """Physical state of the cart-pole."""
    psi: float    # cart position (m)
    v: float      # cart velocity (m/s)
    phi: float    # angle, unwrapped (rad)
    omega: float  # angular velocity (rad/s)

    def as_array(self) -> np.ndarray:
        return np.array([self.psi, self.v, self.phi, self.omega], dtype=np.float64)

    @classmethod
    def from_array(cls, x: np.ndarray) -> "PlantState":
        x = np.asarray(x, dtype=np.float64)
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


def pendulum_rhs(x: Any, u: Any, p: PendulumParams, sin: Callable, cos: Callable) -> tuple:
    """Continuous-time right-hand side as a tuple (psi_dot, v_dot, phi_dot, omega_dot)."""
    v, phi, omega = x[1], x[2], x[3]
    s, c = sin(phi), cos(phi)
    v_dot = (
        p.m * p.g * s * c
        - INERTIA_FACTOR * (u + p.m * p.l * omega ** 2 * s - p.mu_c * v)
        - p.mu_p * omega * c / p.l
    ) / (p.m * c ** 2 - INERTIA_FACTOR * p.M)
    omega_dot = 3.0 / (7.0 * p.l) * (p.g * s - v_dot * c - p.mu_p * omega / (p.m * p.l))
    return v, v_dot, omega, omega_dot


def kinetic_energy(x: Any, p: PendulumParams, cos: Callable = np.cos) -> Any:
    """Kinetic energy of the cart-pole, including the cart/rod coupling term."""
    v, phi, omega = x[1], x[2], x[3]
    return (
        0.5 * p.M * v ** 2
        + p.m * p.l * v * omega * cos(phi)
        + 0.5 * INERTIA_FACTOR * p.m * p.l ** 2 * omega ** 2
    )


def potential_energy(x: Any, p: PendulumParams, cos: Callable = np.cos) -> Any:
    """Potential energy, maximal upright."""
    return p.m * p.g * p.l * cos(x[2])


def total_energy(x: np.ndarray, p: PendulumParams) -> float:
    return float(kinetic_energy(x, p) + potential_energy(x, p))


def power(x: np.ndarray, u: float, p: PendulumParams) -> float:
    """Time derivative of the total energy: input power minus friction losses."""
    return float(u * x[1] - p.mu_c * x[1] ** 2 - p.mu_p * x[3] ** 2)


def stage_cost_expr(
    x: Any,
    u: Any,
    u_prev: Any,
    psi_r: Any,
    p: PendulumParams,
    w: StageCostWeights,
    cos: Callable,
) -> Any:
    """Stage cost E_k - 10 E_p + 10 (psi - psi_r)^2 + du D du for any backend."""
    du = u - u_prev
    return (
        kinetic_energy(x, p, cos)
        - w.potential_weight * potential_energy(x, p, cos)
        + w.position_weight * (x[0] - psi_r) ** 2
        + w.input_change_weight * du ** 2
    )


def derivatives(x: np.ndarray, u: float, params: PendulumParams) -> np.ndarray:
    """Continuous-time state derivative of the cart-pole."""
    return np.array(pendulum_rhs(x, u, params, np.sin, np.cos), dtype=np.float64)


def rk4_step(x: np.ndarray, u: float, params: PendulumParams, dt: float | None = None) -> np.ndarray:
    """Advance one step with classical RK4, input held constant.

    Args:
        x: State [psi, v, phi, omega]
        u: Cart force (N)
        params: Pendulum parameters
        dt: Step length, defaults to ``params.dt``

    Returns:
        The state after ``dt`` seconds
    """
    h = params.dt if dt is None else dt
    x = np.asarray(x, dtype=np.float64)
    k1 = derivatives(x, u, params)
    k2 = derivatives(x + 0.5 * h * k1, u, params)
    k3 = derivatives(x + 0.5 * h * k2, u, params)
    k4 = derivatives(x + h * k3, u, params)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state: PlantState, u: float, params: PendulumParams) -> PlantState:
    return PlantState.from_array(rk4_step(state.as_array(), u, params))


def stage_cost(
    x: np.ndarray,
    u: float,
    u_prev: float,
    psi_r: float,
    params: PendulumParams,
    weights: StageCostWeights | None = None,
) -> float:
    """Numeric stage cost of a state/input pair."""
    weights = weights or StageCostWeights()
    return float(stage_cost_expr(np.asarray(x), u, u_prev, psi_r, params, weights, np.cos))


@dataclass(frozen=True)
class ConstraintCheck:
    ok: bool
    position_violation: bool


def check_constraints(x: np.ndarray, u: float, position_limit: float = 2.0) -> ConstraintCheck:
    """Position constraint check; the bound itself is admissible and NaN is a violation."""
    violated = not bool(abs(x[0]) <= position_limit)
    return ConstraintCheck(ok=not violated and math.isfinite(u), position_violation=violated)


def clamp_input(u: float, limit: float = 5.0) -> float:
    return float(min(max(u, -limit), limit))
