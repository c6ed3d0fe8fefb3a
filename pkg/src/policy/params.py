"""Flat, addressable parameter vector of the meta-policy."""

from enum import Enum

import numpy as np

GROUPS = ("theta_c", "theta_N", "alpha", "theta_M", "theta_L", "log_sigma_M", "log_sigma_ML")


class PolicyMode(str, Enum):
    """Which parameter groups are trained (the rest act deterministically)."""
    JOINT = "joint"          # everything except the MPC tunables
    RECOMPUTE = "recompute"  # recompute head only
    HORIZON = "horizon"      # horizon head and dispersion, recompute every step
    LQR = "lqr"              # LQR weights and u_ML spread, periodic recompute schedule


TRAINABLE: dict[PolicyMode, tuple[str, ...]] = {
    PolicyMode.JOINT: ("theta_c", "theta_N", "alpha", "theta_L", "log_sigma_M", "log_sigma_ML"),
    PolicyMode.RECOMPUTE: ("theta_c",),
    PolicyMode.HORIZON: ("theta_N", "alpha"),
    PolicyMode.LQR: ("theta_L", "log_sigma_ML"),
}


class PolicyParams:
    """theta = [theta_c, theta_N, alpha, theta_M, theta_L, log_sigma_M, log_sigma_ML].

    ``group`` returns views, so networks bound to a group see every write
    into ``vector``. Always assign in place (``vector[:] = ...``).
    """

    def __init__(self, sizes: dict[str, int]):
        missing = set(GROUPS) - set(sizes)
        if missing:
            raise ValueError(f"missing parameter groups: {sorted(missing)}")
        self.slices: dict[str, slice] = {}
        offset = 0
        for name in GROUPS:
            self.slices[name] = slice(offset, offset + int(sizes[name]))
            offset += int(sizes[name])
        self.vector = np.zeros(offset)

    @property
    def size(self) -> int:
        return self.vector.size

    def group(self, name: str) -> np.ndarray:
        return self.vector[self.slices[name]]

    def set_group(self, name: str, values: np.ndarray | float) -> None:
        self.vector[self.slices[name]] = values

    def mask(self, names: tuple[str, ...]) -> np.ndarray:
        """Boolean mask over ``vector`` selecting the named groups."""
        out = np.zeros(self.size, dtype=bool)
        for name in names:
            out[self.slices[name]] = True
        return out

    def trainable_mask(self, mode: PolicyMode) -> np.ndarray:
        return self.mask(TRAINABLE[PolicyMode(mode)])

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: self.group(name).copy() for name in GROUPS}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name in GROUPS:
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != self.group(name).shape:
                raise ValueError(f"group {name} has shape {values.shape}, expected {self.group(name).shape}")
            self.set_group(name, values)
