from typing import NamedTuple

import numpy as np
import pandas as pd

from ..errors import ConfigurationError
from .experiment import MASS_TOL, Experiment
from .grid import TypeGrid, ValueGrid


class StrategyProfile(NamedTuple):
    """Stage-1 strategies: mass[i, r, s] is the experiment bidder i registers at type (r, s)."""

    grid: ValueGrid
    types: TypeGrid
    mass: np.ndarray
    constrained: bool = True

    @classmethod
    def symmetric(cls, grid: ValueGrid, types: TypeGrid, shared: np.ndarray, n: int, constrained: bool = True):
        """Let n bidders share one type to experiment map of shape (R, S, m + 1)."""
        return cls(grid, types, np.broadcast_to(shared, (n, *shared.shape)).copy(), constrained)

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return self.grid.a + self.types.s * (self.grid.b - self.grid.a)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(self.mass == self.mass[0]))

    def experiment(self, i: int, ri: int, si: int) -> Experiment:
        return Experiment(self.grid, self.mass[i, ri, si], float(self.centers[si]))

    def validate(self, mean_tol: float) -> "StrategyProfile":
        """Check completeness over the type grid, probability vectors and the mean constraints.

        Raises:
            ConfigurationError: On a missing assignment or a broken invariant.
        """
        expected = (*self.types.shape, self.grid.size)
        if self.mass.ndim != 4 or self.mass.shape[1:] != expected:
            raise ConfigurationError(
                f"profile has shape {self.mass.shape}, expected (n, {', '.join(map(str, expected))})"
            )
        if np.any(~np.isfinite(self.mass)):
            raise ConfigurationError("profile leaves some grid types without an assignment")
        if np.any(self.mass < 0) or np.any(np.abs(self.mass.sum(axis=-1) - 1.0) > MASS_TOL):
            raise ConfigurationError("profile assigns a non-probability vector")
        if self.constrained:
            means = self.mass @ self.grid.points
            worst = float(np.max(np.abs(means - self.centers[None, None, :])))
            if worst > mean_tol:
                raise ConfigurationError(f"profile breaks a mean constraint by {worst:.3e}")
        return self

    def to_frame(self) -> pd.DataFrame:
        """Long format rows (bidder, r, s, z, mass)."""
        n, R, S, M = self.mass.shape
        i, ri, si, j = np.meshgrid(np.arange(n), np.arange(R), np.arange(S), np.arange(M), indexing="ij")
        return pd.DataFrame(
            {
                "bidder": i.ravel(),
                "r": self.types.r[ri.ravel()],
                "s": self.types.s[si.ravel()],
                "z": self.grid.points[j.ravel()],
                "mass": self.mass.ravel(),
            }
        )

    @classmethod
    def from_frame(
        cls, frame: pd.DataFrame, grid: ValueGrid, types: TypeGrid, constrained: bool = True
    ) -> "StrategyProfile":
        """Rebuild a profile from `to_frame` rows; cells without a row stay NaN and fail validation."""
        n = int(frame["bidder"].max()) + 1
        mass = np.full((n, *types.shape, grid.size), np.nan)
        ri = np.searchsorted(types.r, frame["r"].to_numpy())
        si = np.searchsorted(types.s, frame["s"].to_numpy())
        j = np.rint((frame["z"].to_numpy() - grid.a) / grid.step).astype(int)
        mass[frame["bidder"].to_numpy(), ri, si, j] = frame["mass"].to_numpy()
        return cls(grid, types, mass, constrained)
