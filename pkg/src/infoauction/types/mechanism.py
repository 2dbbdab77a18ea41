from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .cost import CostModel
from .grid import TypeGrid, ValueGrid


class AuditCurve(BaseModel):
    """Monotone audit cost k(q) tabulated at probabilities q, linearly interpolated."""

    model_config = ConfigDict(frozen=True)

    q: Tuple[float, ...] = (0.0, 1.0)
    cost: Tuple[float, ...] = (0.0, 0.1)

    @model_validator(mode="after")
    def _check_curve(self) -> "AuditCurve":
        q, c = np.asarray(self.q), np.asarray(self.cost)
        if q.size < 2 or q.size != c.size:
            raise ValueError("audit curve needs matching q and cost tables with at least two points")
        if q[0] != 0.0 or q[-1] != 1.0 or np.any(np.diff(q) <= 0):
            raise ValueError("audit curve q must increase strictly from 0 to 1")
        if c[0] < 0 or np.any(np.diff(c) < 0):
            raise ValueError("audit curve cost must be nonnegative and nondecreasing")
        return self

    def __call__(self, q: np.ndarray | float) -> np.ndarray:
        return np.interp(q, self.q, self.cost)


class MechanismConfig(BaseModel):
    """Immutable description of one auction environment and the numerical settings used on it."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(description="Number of bidders")
    value_grid: ValueGrid
    type_grid: TypeGrid
    cost_model: CostModel
    mean_tol: float = Field(default=1e-9, gt=0)
    solver_tol: float = Field(default=1e-10, gt=0)
    fee_tol: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=500, ge=1)
    seed: int = 0
    punishment: Tuple[float, ...] = Field(default=(-1.0,), description="P_i <= 0, one value is broadcast")
    audit_experiment_curve: AuditCurve = AuditCurve()
    audit_cost_curve: AuditCurve = AuditCurve()
    dominance_trials: int = Field(default=100, ge=0)
    competitor_limit: int = Field(default=20000, ge=1)

    @field_validator("n")
    @classmethod
    def _check_n(cls, value: int) -> int:
        if value < 2:
            raise ValueError(f"n ≥ 2 required, got n={value}")
        return value

    @field_validator("punishment")
    @classmethod
    def _check_punishment(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(p > 0 for p in value):
            raise ValueError("punishment values must satisfy P_i ≤ 0")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "MechanismConfig":
        if self.cost_model.grid != self.value_grid:
            raise ValueError("cost model grid differs from the value grid")
        if len(self.punishment) not in (1, self.n):
            raise ValueError(f"punishment needs 1 or n={self.n} entries, got {len(self.punishment)}")
        return self

    def penalty(self, i: int) -> float:
        """Punishment P_i of bidder i."""
        return self.punishment[0] if len(self.punishment) == 1 else self.punishment[i]

    @property
    def z_s(self) -> np.ndarray:
        """Centers z_s of the s-grid."""
        return self.value_grid.a + self.type_grid.s * (self.value_grid.b - self.value_grid.a)
