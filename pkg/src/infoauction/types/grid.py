from typing import Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

WEIGHT_TOL = 1e-12

Distribution = Literal["uniform", "beta", "custom"]


class ValueGrid(BaseModel):
    """Uniform discretization z_0 = a < ... < z_m = b of the value interval."""

    model_config = ConfigDict(frozen=True)

    a: float = Field(gt=0, description="Lowest value a bidder may hold")
    b: float = Field(description="Highest value a bidder may hold")
    m: int = Field(ge=2, description="Number of grid intervals, the grid has m + 1 points")

    @model_validator(mode="after")
    def _check_bounds(self) -> "ValueGrid":
        if not self.b > self.a:
            raise ValueError(f"value grid needs b > a, got a={self.a}, b={self.b}")
        return self

    @property
    def points(self) -> np.ndarray:
        """Grid values, endpoints exactly a and b."""
        pts = np.linspace(self.a, self.b, self.m + 1)
        pts[0], pts[-1] = self.a, self.b
        return pts

    @property
    def size(self) -> int:
        return self.m + 1

    @property
    def step(self) -> float:
        return (self.b - self.a) / self.m

    def center(self, alpha: float) -> float:
        """Mean value z_alpha = a + alpha (b - a) of the experiments in D(alpha)."""
        return self.a + alpha * (self.b - self.a)


def _discretize(points: np.ndarray, distribution: Distribution, beta: Sequence[float]) -> np.ndarray:
    if distribution == "uniform":
        return np.full(points.size, 1.0 / points.size)

    # cell masses of the Beta c.d.f., cells split halfway between neighbouring points
    edges = np.concatenate(([0.0], (points[1:] + points[:-1]) / 2, [1.0]))
    weights = np.diff(stats.beta.cdf(edges, *beta))
    return weights / weights.sum()


class TypeGrid(BaseModel):
    """Discretized product type space: cost scales r and mean-value parameters s with their weights."""

    model_config = ConfigDict(frozen=True)

    r_points: Tuple[float, ...]
    s_points: Tuple[float, ...]
    r_weights: Tuple[float, ...]
    s_weights: Tuple[float, ...]

    @field_validator("r_points", "s_points")
    @classmethod
    def _check_points(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value:
            raise ValueError("type grid needs at least one point")
        pts = np.asarray(value)
        if np.any(pts < 0) or np.any(pts > 1):
            raise ValueError("type grid points must lie in [0, 1]")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("type grid points must be strictly increasing")
        return value

    @model_validator(mode="after")
    def _check_weights(self) -> "TypeGrid":
        for name, points, weights in (
            ("r", self.r_points, self.r_weights),
            ("s", self.s_points, self.s_weights),
        ):
            if len(points) != len(weights):
                raise ValueError(f"{name}_weights has {len(weights)} entries for {len(points)} points")
            w = np.asarray(weights)
            if np.any(w < 0):
                raise ValueError(f"{name}_weights must be nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise ValueError(f"{name}_weights must sum to 1, got {w.sum()!r}")
        return self

    @classmethod
    def build(
        cls,
        r_points: Sequence[float],
        s_points: Sequence[float],
        r_distribution: Distribution = "uniform",
        s_distribution: Distribution = "uniform",
        r_beta: Sequence[float] = (2.0, 2.0),
        s_beta: Sequence[float] = (2.0, 2.0),
        r_weights: Sequence[float] | None = None,
        s_weights: Sequence[float] | None = None,
    ) -> "TypeGrid":
        """Create a type grid from points and a named weight family.

        Args:
            r_points (Sequence[float]): Cost-scale grid.
            s_points (Sequence[float]): Mean-value grid.
            r_distribution (Distribution): "uniform", "beta" or "custom" (uses r_weights verbatim).
            s_distribution (Distribution): Same for s.
            r_beta (Sequence[float]): Beta shape parameters for r.
            s_beta (Sequence[float]): Beta shape parameters for s.
            r_weights (Sequence[float] | None): Explicit r weights for "custom".
            s_weights (Sequence[float] | None): Explicit s weights for "custom".

        Returns:
            TypeGrid: The validated grid.
        """
        rp = np.asarray(r_points, dtype=float)
        sp = np.asarray(s_points, dtype=float)
        wr = r_weights if r_distribution == "custom" else _discretize(rp, r_distribution, r_beta)
        ws = s_weights if s_distribution == "custom" else _discretize(sp, s_distribution, s_beta)
        if wr is None or ws is None:
            raise ValueError('"custom" type weights need explicit weights')
        return cls(
            r_points=tuple(float(x) for x in rp),
            s_points=tuple(float(x) for x in sp),
            r_weights=tuple(float(x) for x in wr),
            s_weights=tuple(float(x) for x in ws),
        )

    @property
    def r(self) -> np.ndarray:
        return np.asarray(self.r_points)

    @property
    def s(self) -> np.ndarray:
        return np.asarray(self.s_points)

    @property
    def wr(self) -> np.ndarray:
        return np.asarray(self.r_weights)

    @property
    def ws(self) -> np.ndarray:
        return np.asarray(self.s_weights)

    @property
    def weights(self) -> np.ndarray:
        """Joint type weights, shape (len(r), len(s))."""
        return np.outer(self.wr, self.ws)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.r_points), len(self.s_points)

    @property
    def top_r_index(self) -> int:
        """Index of the highest cost scale r-bar, the binding participation type."""
        return len(self.r_points) - 1
