"""LQR machinery: DARE, backward Riccati passes and gain sensitivities.

Weights are parameterized by lower-triangular factors with ``Q = Q_c^T Q_c``
and ``R = R_c^T R_c``; gradients are taken per scalar entry of the factors.
Gains follow ``K = (R + B^T S B)^{-1} B^T S A`` and the feedback is ``u = -K e``.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from src.errors import (
    NoConvergenceError,
    NotStabilizableError,
    SingularInnerMatrixError,
    SingularJacobianError,
)

logger = logging.getLogger(__name__)

DARE_TOL = 1e-9
EIG_FLOOR = 1e-6


def lower_factor(M: np.ndarray) -> np.ndarray:
    """Lower-triangular L with positive diagonal and L^T L = M for SPD M."""
    M = 0.5 * (M + M.T)
    C = la.cholesky(M[::-1, ::-1], lower=True)
    return np.ascontiguousarray(C[::-1, ::-1].T)


def clamp_eigenvalues(M: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric matrix with every eigenvalue below ``floor`` raised to it."""
    w, V = la.eigh(0.5 * (M + M.T))
    return (V * np.maximum(w, floor)) @ V.T


@dataclass(frozen=True)
class LqrWeights:
    """Cholesky-parameterized LQR weights (cross term fixed to zero)."""
    Q_chol: np.ndarray
    R_chol: np.ndarray

    @property
    def n(self) -> int:
        return self.Q_chol.shape[0]

    @property
    def m(self) -> int:
        return self.R_chol.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return self.Q_chol.T @ self.Q_chol

    @property
    def R(self) -> np.ndarray:
        return self.R_chol.T @ self.R_chol

    @property
    def n_params(self) -> int:
        return self.n * (self.n + 1) // 2 + self.m * (self.m + 1) // 2

    def params(self) -> np.ndarray:
        """Flat parameter vector: lower triangle of Q_c, then of R_c (row-major)."""
        return np.concatenate([self.Q_chol[np.tril_indices(self.n)], self.R_chol[np.tril_indices(self.m)]])

    @classmethod
    def from_params(cls, p: np.ndarray, n: int, m: int) -> "LqrWeights":
        p = np.asarray(p, dtype=np.float64)
        nq = n * (n + 1) // 2
        Q_chol = np.zeros((n, n))
        R_chol = np.zeros((m, m))
        Q_chol[np.tril_indices(n)] = p[:nq]
        R_chol[np.tril_indices(m)] = p[nq:]
        return cls(Q_chol, R_chol)

    @classmethod
    def from_matrices(cls, Q: np.ndarray, R: np.ndarray) -> "LqrWeights":
        return cls(lower_factor(np.atleast_2d(Q)), lower_factor(np.atleast_2d(R)))

    def param_directions(self) -> tuple[np.ndarray, np.ndarray]:
        """dQ/dp and dR/dp for every flat parameter, shapes (P, n, n) and (P, m, m)."""
        dQ = np.zeros((self.n_params, self.n, self.n))
        dR = np.zeros((self.n_params, self.m, self.m))
        idx = 0
        for factor, target in ((self.Q_chol, dQ), (self.R_chol, dR)):
            size = factor.shape[0]
            for i, j in zip(*np.tril_indices(size)):
                E = np.zeros((size, size))
                E[i, j] = 1.0
                target[idx] = E.T @ factor + factor.T @ E
                idx += 1
        return dQ, dR


@dataclass
class LqrSolution:
    """Riccati matrices and gains of one LQR design along a trajectory."""
    S_seq: np.ndarray                     # (H+1, n, n)
    K_seq: np.ndarray                     # (H, m, n)
    S_inf: np.ndarray
    K_inf: np.ndarray
    grad_K: np.ndarray | None = None      # (H, P, m, n)
    grad_S_inf: np.ndarray | None = None  # (P, n, n)
    grad_K_inf: np.ndarray | None = None  # (P, m, n)


def _inner_solve(R: np.ndarray, B: np.ndarray, S: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    E = R + B.T @ S @ B
    try:
        factor = la.cho_factor(0.5 * (E + E.T))
    except la.LinAlgError as exc:
        raise SingularInnerMatrixError("R + B^T S B is not positive definite") from exc
    return E, la.cho_solve(factor, rhs)


def dare_gain(A: np.ndarray, B: np.ndarray, S: np.ndarray, R: np.ndarray) -> np.ndarray:
    return _inner_solve(R, B, S, B.T @ S @ A)[1]


def dare_residual(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, S: np.ndarray) -> float:
    """Infinity norm of the stationary Riccati equation at S."""
    K = dare_gain(A, B, S, R)
    F = A.T @ S @ A - S - A.T @ S @ B @ K + Q
    return float(np.max(np.abs(F)))


def _iterate_dare(A, B, Q, R, max_iter: int = 10_000) -> np.ndarray:
    S = Q.copy()
    for _ in range(max_iter):
        K = dare_gain(A, B, S, R)
        S_new = Q + A.T @ S @ A - A.T @ S @ B @ K
        S_new = 0.5 * (S_new + S_new.T)
        if not np.all(np.isfinite(S_new)):
            raise NoConvergenceError("Riccati iteration diverged")
        if np.max(np.abs(S_new - S)) <= DARE_TOL * max(1.0, np.max(np.abs(S_new))):
            return S_new
        S = S_new
    raise NoConvergenceError(f"Riccati iteration did not converge in {max_iter} iterations")


def _newton_refine(A, B, Q, R, S, steps: int = 3) -> np.ndarray:
    # Hewer iterations: one Stein equation per step
    for _ in range(steps):
        K = dare_gain(A, B, S, R)
        Acl = A - B @ K
        S = la.solve_discrete_lyapunov(Acl.T, Q + K.T @ R @ K)
        S = 0.5 * (S + S.T)
    return S


def solve_dare(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution of the DARE and its gain.

    Args:
        A, B: Discrete-time dynamics
        Q, R: Positive (semi)definite weights

    Returns:
        (S_inf, K_inf)

    Raises:
        NotStabilizableError: If no stabilizing solution exists
        NoConvergenceError: If the residual cannot be brought below tolerance
    """
    A, B = np.atleast_2d(A).astype(np.float64), np.atleast_2d(B).astype(np.float64)
    Q, R = np.atleast_2d(Q).astype(np.float64), np.atleast_2d(R).astype(np.float64)
    try:
        S = la.solve_discrete_are(A, B, Q, R)
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.debug("Schur DARE solve failed (%s), falling back to iteration", exc)
        S = _iterate_dare(A, B, Q, R)
    S = 0.5 * (S + S.T)

    scale = max(1.0, float(np.max(np.abs(S))))
    if dare_residual(A, B, Q, R, S) > DARE_TOL * scale:
        try:
            S = _newton_refine(A, B, Q, R, S)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise NoConvergenceError(f"DARE refinement failed: {exc}") from exc
    residual = dare_residual(A, B, Q, R, S)
    if not np.isfinite(residual) or residual > DARE_TOL * max(1.0, float(np.max(np.abs(S)))):
        raise NoConvergenceError(f"DARE residual {residual:.3e} above tolerance")

    K = dare_gain(A, B, S, R)
    radius = float(np.max(np.abs(np.linalg.eigvals(A - B @ K))))
    if radius >= 1.0:
        raise NotStabilizableError(f"closed-loop spectral radius {radius:.6f} >= 1")
    return S, K


def backward_pass(
    A_seq: np.ndarray,
    B_seq: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    S_terminal: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-horizon Riccati sweep.

    Returns:
        S_seq of shape (H+1, n, n) with S_seq[H] = S_terminal, and K_seq of shape (H, m, n)
    """
    horizon, n = A_seq.shape[0], A_seq.shape[1]
    m = B_seq.shape[2]
    S_seq = np.empty((horizon + 1, n, n))
    K_seq = np.empty((horizon, m, n))
    S_seq[horizon] = S_terminal
    for k in range(horizon - 1, -1, -1):
        A, B, S_next = A_seq[k], B_seq[k], S_seq[k + 1]
        _, K = _inner_solve(R, B, S_next, B.T @ S_next @ A)
        S = Q + A.T @ S_next @ A - A.T @ S_next @ B @ K
        S_seq[k] = 0.5 * (S + S.T)
        K_seq[k] = K
    return S_seq, K_seq


def grad_K_infinite(
    A: np.ndarray, B: np.ndarray, weights: LqrWeights, S: np.ndarray | None = None, K: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Sensitivities of (S_inf, K_inf) to every Cholesky parameter by implicit differentiation.

    The stationary system F(S, K) = [A^T S A - S - A^T S B K + Q; (R + B^T S B) K - B^T S A]
    is linearized in (S, K) and solved for each parameter direction.

    Returns:
        dS of shape (P, n, n) and dK of shape (P, m, n)

    Raises:
        SingularJacobianError: If dF/d(S, K) is singular
    """
    Q, R = weights.Q, weights.R
    if S is None or K is None:
        S, K = solve_dare(A, B, Q, R)
    n, m = A.shape[0], B.shape[1]
    E = R + B.T @ S @ B

    def apply(dS: np.ndarray, dK: np.ndarray) -> np.ndarray:
        f1 = A.T @ dS @ A - dS - A.T @ dS @ B @ K - A.T @ S @ B @ dK
        f2 = B.T @ dS @ B @ K + E @ dK - B.T @ dS @ A
        return np.concatenate([f1.ravel(), f2.ravel()])

    size = n * n + m * n
    jac = np.empty((size, size))
    for col in range(size):
        unit = np.zeros(size)
        unit[col] = 1.0
        jac[:, col] = apply(unit[: n * n].reshape(n, n), unit[n * n:].reshape(m, n))

    dQ, dR = weights.param_directions()
    rhs = np.stack([np.concatenate([dQ[i].ravel(), (dR[i] @ K).ravel()]) for i in range(weights.n_params)], axis=1)
    condition = np.linalg.cond(jac)
    if not np.isfinite(condition) or condition > 1e14:
        raise SingularJacobianError(f"Riccati implicit-function Jacobian is singular (cond {condition:.2e})")
    try:
        dy = -np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobianError(str(exc)) from exc
    dS = dy[: n * n].T.reshape(-1, n, n)
    dK = dy[n * n:].T.reshape(-1, m, n)
    return 0.5 * (dS + dS.transpose(0, 2, 1)), dK


def grad_K_timevarying(
    A_seq: np.ndarray,
    B_seq: np.ndarray,
    weights: LqrWeights,
    S_seq: np.ndarray,
    K_seq: np.ndarray,
    grad_S_terminal: np.ndarray,
) -> np.ndarray:
    """Propagate parameter sensitivities backward through a time-varying sweep.

    Args:
        A_seq, B_seq: Linearizations used by ``backward_pass``
        weights: Weights the sweep was run with
        S_seq, K_seq: Output of ``backward_pass``
        grad_S_terminal: dS_terminal/dp, shape (P, n, n)

    Returns:
        dK_k/dp for every k, shape (H, P, m, n)
    """
    horizon = A_seq.shape[0]
    if S_seq.shape[0] != horizon + 1 or K_seq.shape[0] != horizon:
        raise ValueError("S_seq/K_seq do not match the linearization length")
    R = weights.R
    dQ, dR = weights.param_directions()
    n_params = dQ.shape[0]
    m, n = K_seq.shape[1], K_seq.shape[2]
    grad_K = np.empty((horizon, n_params, m, n))
    dS_next = np.asarray(grad_S_terminal, dtype=np.float64)
    for k in range(horizon - 1, -1, -1):
        A, B, S_next, K = A_seq[k], B_seq[k], S_seq[k + 1], K_seq[k]
        E = R + B.T @ S_next @ B
        dE = dR + B.T @ dS_next @ B
        dK = np.linalg.solve(E, (B.T @ dS_next @ A - dE @ K).transpose(1, 0, 2).reshape(m, -1))
        dK = dK.reshape(m, n_params, n).transpose(1, 0, 2)
        dS = dQ + A.T @ dS_next @ A - A.T @ dS_next @ B @ K - A.T @ S_next @ B @ dK
        dS_next = 0.5 * (dS + dS.transpose(0, 2, 1))
        grad_K[k] = dK
    return grad_K


def solve_steady_lqr(A: np.ndarray, B: np.ndarray, weights: LqrWeights, with_gradients: bool = False) -> LqrSolution:
    """Stationary LQR design, optionally with IFT sensitivities."""
    S, K = solve_dare(A, B, weights.Q, weights.R)
    solution = LqrSolution(S_seq=S[None], K_seq=np.empty((0,) + K.shape), S_inf=S, K_inf=K)
    if with_gradients:
        solution.grad_S_inf, solution.grad_K_inf = grad_K_infinite(A, B, weights, S, K)
    return solution


def solve_lqr_trajectory(
    A_seq: np.ndarray,
    B_seq: np.ndarray,
    weights: LqrWeights,
    steady: LqrSolution,
    with_gradients: bool = False,
) -> LqrSolution:
    """Time-varying LQR along a trajectory, terminated by a stationary design."""
    S_seq, K_seq = backward_pass(A_seq, B_seq, weights.Q, weights.R, steady.S_inf)
    solution = LqrSolution(
        S_seq=S_seq, K_seq=K_seq, S_inf=steady.S_inf, K_inf=steady.K_inf,
        grad_S_inf=steady.grad_S_inf, grad_K_inf=steady.grad_K_inf,
    )
    if with_gradients:
        if steady.grad_S_inf is None:
            raise ValueError("steady-state design carries no gradients")
        solution.grad_K = grad_K_timevarying(A_seq, B_seq, weights, S_seq, K_seq, steady.grad_S_inf)
    return solution


def init_weights(
    hessians: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]],
    x_s: np.ndarray,
    u_s: float = 0.0,
    floor: float = EIG_FLOOR,
) -> LqrWeights:
    """LQR weights from the stage-cost Hessians at a steady state.

    Args:
        hessians: Callable returning (d2l/dx2, d2l/du2) at (x_s, u_s)
        x_s, u_s: Steady state and input
        floor: Smallest admissible eigenvalue of Q
    """
    H_x, H_u = hessians(x_s, u_s)
    Q = clamp_eigenvalues(np.atleast_2d(H_x), floor)
    R = clamp_eigenvalues(np.atleast_2d(H_u), floor)
    return LqrWeights.from_matrices(Q, R)


def lqr_input(K: np.ndarray, error: np.ndarray) -> np.ndarray:
    """Feedback correction -K e."""
    return -np.atleast_2d(K) @ np.asarray(error, dtype=np.float64)
