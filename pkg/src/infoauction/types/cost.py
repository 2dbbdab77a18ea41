from enum import Enum
from typing import TYPE_CHECKING, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ConfigurationError
from .grid import ValueGrid

if TYPE_CHECKING:
    from .experiment import Experiment


class CostVariant(str, Enum):
    """Where the information processing cost is anchored."""

    ANCHOR_AT_S = "anchor-at-s"  # distance to the prior mean z_s
    ANCHOR_AT_CENTER = "anchor-at-center"  # distance to the experiment's own mean


class CostModel(BaseModel):
    """Cost family c_{r,s}(f) = r * sum_j k(|z_j - anchor|) f_j with a convex nondecreasing kernel k."""

    model_config = ConfigDict(frozen=True)

    grid: ValueGrid
    kernel: Literal["power", "table"] = "power"
    gamma: float = Field(default=2.0, ge=1.0, description="Exponent of the power kernel")
    scale: float = Field(default=1.0, ge=0.0, description="Multiplier of the power kernel")
    table_x: Tuple[float, ...] = ()
    table_y: Tuple[float, ...] = ()
    variant: CostVariant = CostVariant.ANCHOR_AT_S

    @model_validator(mode="after")
    def _check_table(self) -> "CostModel":
        if self.kernel != "table":
            return self
        x, y = np.asarray(self.table_x, dtype=float), np.asarray(self.table_y, dtype=float)
        if x.size < 2 or x.size != y.size:
            raise ValueError("kernel table needs matching x and y with at least two points")
        if x[0] != 0 or y[0] != 0:
            raise ValueError("kernel table must start at (0, 0)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("kernel table x must be strictly increasing")
        slopes = np.diff(y) / np.diff(x)
        if np.any(slopes < 0) or np.any(np.diff(slopes) < -1e-12):
            raise ValueError("kernel table must be nondecreasing and convex")
        return self

    def k(self, distance: np.ndarray | float) -> np.ndarray:
        """Evaluate the kernel at nonnegative distances."""
        d = np.abs(np.asarray(distance, dtype=float))
        if self.kernel == "power":
            return self.scale * d**self.gamma

        x, y = np.asarray(self.table_x), np.asarray(self.table_y)
        inner = np.interp(d, x, y)
        # linear continuation past the last breakpoint keeps convexity
        slope = (y[-1] - y[-2]) / (x[-1] - x[-2])
        return np.where(d > x[-1], y[-1] + slope * (d - x[-1]), inner)

    def anchor(self, s: float, center: float) -> float:
        """Anchor value for a true mean parameter s and an experiment mean `center`."""
        return self.grid.center(s) if self.variant is CostVariant.ANCHOR_AT_S else center

    def coefficients(self, r: float, s: float, center: float) -> np.ndarray:
        """Per grid point cost r * k(|z_j - anchor|), linear in the mass vector at a fixed center."""
        return r * self.k(self.grid.points - self.anchor(s, center))


def cost(model: CostModel, r: float, s: float, f: "Experiment") -> float:
    """Information processing cost of experiment f for the type (r, s).

    Args:
        model (CostModel): The cost family.
        r (float): Cost scale in [0, 1].
        s (float): Mean-value parameter in [0, 1].
        f (Experiment): Experiment on the model's grid.

    Returns:
        float: Nonnegative cost.

    Raises:
        ConfigurationError: If f lives on another grid.
    """
    if f.grid != model.grid:
        raise ConfigurationError("experiment grid does not match the cost model grid")
    return float(model.coefficients(r, s, f.mean) @ f.mass)
