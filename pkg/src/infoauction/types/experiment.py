from typing import Literal, NamedTuple

import numpy as np
import pandas as pd

from ..errors import ConfigurationError, InfeasibilityError
from .grid import ValueGrid

DEFAULT_MEAN_TOL = 1e-9
MASS_TOL = 1e-10

Shape = Literal["degenerate", "two-point extreme", "uniform"]


class Experiment(NamedTuple):
    """A probability vector over the value grid committed to at stage 1."""

    grid: ValueGrid
    mass: np.ndarray
    center: float

    @property
    def mean(self) -> float:
        return float(self.grid.points @ self.mass)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.mass > 0))

    def validate(self, mean_tol: float = DEFAULT_MEAN_TOL, constrained: bool = True) -> "Experiment":
        """Check the probability and mean-constraint invariants.

        Args:
            mean_tol (float): Allowed gap between the mean and the declared center.
            constrained (bool): Whether the experiment claims membership in D(center).

        Returns:
            Experiment: self, for chaining.

        Raises:
            ConfigurationError: If an invariant does not hold.
        """
        if self.mass.shape != (self.grid.size,):
            raise ConfigurationError(f"experiment mass has shape {self.mass.shape}, expected ({self.grid.size},)")
        if np.any(self.mass < 0):
            raise ConfigurationError("experiment mass must be nonnegative")
        if abs(self.mass.sum() - 1.0) > MASS_TOL:
            raise ConfigurationError(f"experiment mass sums to {self.mass.sum()!r}, expected 1")
        if constrained and abs(self.mean - self.center) > mean_tol:
            raise ConfigurationError(f"experiment mean {self.mean!r} misses its center {self.center!r}")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.grid.points, "mass": self.mass})

    @classmethod
    def point(cls, grid: ValueGrid, j: int) -> "Experiment":
        """Degenerate experiment delta_{z_j}."""
        mass = np.zeros(grid.size)
        mass[j] = 1.0
        return cls(grid, mass, float(grid.points[j]))

    @classmethod
    def from_support(cls, grid: ValueGrid, lo: int, hi: int, center: float) -> "Experiment":
        """Mixture of z_lo and z_hi with mean `center`, z_lo <= center <= z_hi."""
        if lo == hi:
            return cls.point(grid, lo)._replace(center=center)

        z = grid.points
        w_hi = (center - z[lo]) / (z[hi] - z[lo])
        mass = np.zeros(grid.size)
        mass[lo], mass[hi] = 1.0 - w_hi, w_hi
        return cls(grid, mass, center)


def bracket(grid: ValueGrid, center: float, mean_tol: float = DEFAULT_MEAN_TOL) -> tuple[int, int]:
    """Indices of the grid points around `center`; equal when the center sits on the grid."""
    z = grid.points
    nearest = int(np.argmin(np.abs(z - center)))
    if abs(z[nearest] - center) <= mean_tol:
        return nearest, nearest
    hi = int(np.searchsorted(z, center))
    return hi - 1, hi


def make_mean_constrained(
    grid: ValueGrid, alpha: float, shape: Shape = "degenerate", mean_tol: float = DEFAULT_MEAN_TOL
) -> Experiment:
    """Build an experiment in D(alpha) of the requested shape.

    Args:
        grid (ValueGrid): The value grid.
        alpha (float): Mean-value parameter in [0, 1], the center is a + alpha (b - a).
        shape (Shape): "degenerate" (closest point or its bracketing pair), "two-point extreme"
            (mass on a and b only) or "uniform" (equal mass on every grid point).
        mean_tol (float): Tolerance of the mean constraint.

    Returns:
        Experiment: A validated member of D(alpha).

    Raises:
        InfeasibilityError: If alpha lies outside [0, 1] or the shape cannot carry the mean.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InfeasibilityError(f"D({alpha}) is empty, the center must lie in [a, b]")

    center = grid.center(alpha)
    if alpha in (0.0, 1.0):
        # only one distribution on [a, b] has an endpoint as its mean
        return Experiment.point(grid, 0 if alpha == 0.0 else grid.m)._replace(center=center)

    match shape:
        case "degenerate":
            lo, hi = bracket(grid, center, mean_tol)
            f = Experiment.from_support(grid, lo, hi, center)
        case "two-point extreme":
            f = Experiment.from_support(grid, 0, grid.m, center)
        case "uniform":
            f = Experiment(grid, np.full(grid.size, 1.0 / grid.size), center)
            if abs(f.mean - center) > mean_tol:
                raise InfeasibilityError(f"a uniform experiment has mean {f.mean!r}, not {center!r}")
        case _:
            raise InfeasibilityError(f"unknown experiment shape {shape!r}")

    return f.validate(mean_tol)


def mean_constrained_vertices(grid: ValueGrid, alpha: float, mean_tol: float = DEFAULT_MEAN_TOL) -> list[Experiment]:
    """Every vertex of D(alpha) on the grid, one- and two-point supports in lexicographic order."""
    center = grid.center(alpha)
    z = grid.points
    vertices = []
    for lo in range(grid.size):
        for hi in range(lo, grid.size):
            if lo == hi and abs(z[lo] - center) <= mean_tol:
                vertices.append(Experiment.point(grid, lo)._replace(center=center))
            elif lo < hi and z[lo] < center - mean_tol and z[hi] > center + mean_tol:
                vertices.append(Experiment.from_support(grid, lo, hi, center))
    return vertices
