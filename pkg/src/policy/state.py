"""Markovian augmented state of the event-triggered controller and its actions."""

from dataclasses import dataclass, replace

import numpy as np

FEATURE_NAMES = (
    "psi_i", "v_i", "phi_i", "omega_i", "psi_r_i", "N_i",
    "psi_t", "v_t", "phi_t", "omega_t", "psi_r_t", "steps_since",
)
FEATURE_DIM = len(FEATURE_NAMES)


@dataclass(frozen=True)
class AugmentedState:
    """Snapshot at the last computation ``i`` and at the current step ``t``.

    Attributes:
        x_bar_i: Plant state measured at the last computation
        p_hat_i: Reference at the last computation
        N_i: Horizon of the last computation
        x_bar_t: Current plant state
        p_hat_t: Current reference
        steps_since: t - i
    """
    x_bar_i: np.ndarray
    p_hat_i: float
    N_i: int
    x_bar_t: np.ndarray
    p_hat_t: float
    steps_since: int

    @classmethod
    def at_computation(cls, x: np.ndarray, psi_r: float, horizon: int) -> "AugmentedState":
        x = np.array(x, dtype=np.float64)
        return cls(x_bar_i=x, p_hat_i=float(psi_r), N_i=int(horizon), x_bar_t=x.copy(), p_hat_t=float(psi_r),
                   steps_since=0)

    def features(self) -> np.ndarray:
        return np.concatenate([
            self.x_bar_i, [self.p_hat_i, float(self.N_i)],
            self.x_bar_t, [self.p_hat_t, float(self.steps_since)],
        ])

    @classmethod
    def from_features(cls, features: np.ndarray) -> "AugmentedState":
        """Inverse of ``features`` (unnormalized)."""
        f = np.asarray(features, dtype=np.float64)
        return cls(x_bar_i=f[0:4].copy(), p_hat_i=float(f[4]), N_i=int(f[5]), x_bar_t=f[6:10].copy(),
                   p_hat_t=float(f[10]), steps_since=int(f[11]))

    def recomputed(self, horizon: int) -> "AugmentedState":
        """State at decision time right after a computation with ``horizon``."""
        return replace(self, x_bar_i=self.x_bar_t.copy(), p_hat_i=self.p_hat_t, N_i=int(horizon), steps_since=0)

    def advanced(self, x_next: np.ndarray, psi_r_next: float) -> "AugmentedState":
        return replace(self, x_bar_t=np.array(x_next, dtype=np.float64), p_hat_t=float(psi_r_next),
                       steps_since=self.steps_since + 1)


@dataclass
class Action:
    """One meta-action ``[c, N, u_M, u_ML]`` with its executed input.

    ``n`` is the sampled horizon on a computation and the stored ``N_i``
    otherwise; only the input of the branch selected by ``c`` is drawn.
    """
    c: int
    n: int
    u_sampled: float
    u_executed: float
    mean: float
    log_prob: float

    @property
    def u_M(self) -> float | None:
        return self.u_sampled if self.c == 1 else None

    @property
    def u_ML(self) -> float | None:
        return self.u_sampled if self.c == 0 else None


def transition_bookkeeping(
    s: AugmentedState,
    action: Action,
    x_next: np.ndarray,
    psi_r_next: float,
) -> AugmentedState:
    """Deterministic successor state after the plant step."""
    if action.c == 1:
        s = s.recomputed(action.n)
    return s.advanced(x_next, psi_r_next)
