"""Minimal audit probabilities for experiment and cost auditing, and the flat-fee no-audit regime."""

from enum import Enum
from typing import Any, Dict, NamedTuple

import numpy as np
import pandas as pd

from .errors import DomainError
from .fees import FeeSchedule, GapTable
from .log import Logger
from .potential import Equilibrium, solve_equilibrium, solve_response
from .types.mechanism import MechanismConfig
from .vcg import InterimCurve, expected_second_highest, interim_curve, opponent_mixture

logger = Logger()


class AuditRegime(str, Enum):
    EXPERIMENT = "experiment"
    COST = "cost"
    NONE = "none"


class AuditPlan(NamedTuple):
    """Audit probability per bidder and reported parameter, shape (n, len(params))."""

    regime: AuditRegime
    params: np.ndarray
    q: np.ndarray
    expected_audit_cost: float
    revenue: float | None

    def to_frame(self) -> pd.DataFrame:
        n, k = self.q.shape
        bidder, idx = np.meshgrid(np.arange(n), np.arange(k), indexing="ij")
        return pd.DataFrame({"bidder": bidder.ravel(), "param": self.params[idx.ravel()], "q": self.q.ravel()})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regime": self.regime.value,
            "params": self.params.tolist(),
            "q": self.q.tolist(),
            "expected_audit_cost": self.expected_audit_cost,
            "revenue": self.revenue,
        }


class NoAuditResult(NamedTuple):
    equilibrium: Equilibrium
    phi: np.ndarray
    fee: np.ndarray
    payment: float
    revenue: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "phi": self.phi.tolist(),
            "fee": self.fee.tolist(),
            "payment": self.payment,
            "revenue": self.revenue,
            "welfare": self.equilibrium.report.welfare,
            "epsilon": self.equilibrium.epsilon,
        }


def noncompliant_value(r: float, s: float, curve: InterimCurve, cfg: MechanismConfig) -> float:
    """Best pre-fee utility of type (r, s) from an experiment centered on another s-grid point.

    Raises:
        DomainError: If the s-grid has a single point, there is no deviation class.
    """
    others = [t for t in cfg.type_grid.s if t != s]
    if not others:
        raise DomainError("no deviation class: the s-grid has a single center")
    return max(solve_response(r, s, curve, cfg, report=t).value for t in others)


def noncompliant_table(table: GapTable) -> np.ndarray:
    """Psi(r, s) = max over s'' != s of PhiMis(r, s'' | r, s), shape (R, S)."""
    S = table.types.shape[1]
    if S < 2:
        raise DomainError("no deviation class: the s-grid has a single center")
    off = np.where(np.eye(S, dtype=bool)[None, :, :], -np.inf, table.phi_mis)
    return off.max(axis=2)


def experiment_audit_probability(phi: np.ndarray, psi: np.ndarray, punishment: float) -> np.ndarray:
    """q(s) = max_r [(Psi - Phi) / (Psi - P)]^+ over the leading r axis; a zero denominator contributes 0."""
    num = np.asarray(psi, dtype=float) - np.asarray(phi, dtype=float)
    den = np.asarray(psi, dtype=float) - punishment
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, 0.0)
    return np.clip(np.max(np.atleast_2d(ratio), axis=0), 0.0, 1.0)


def cost_audit_probability(tau: np.ndarray, phi: np.ndarray, punishment: float) -> np.ndarray:
    """q(r') = max over (r, s) with tau(r', s) < tau(r, s) of [(tau(r,s) - tau(r',s)) / (Phi(r,s) - tau(r',s) - P)]^+.

    tau and phi have shape (R, S); the result has shape (R,) and lies in [0, 1].
    """
    tau, phi = np.asarray(tau, dtype=float), np.asarray(phi, dtype=float)
    # axes (r', r, s)
    num = tau[None, :, :] - tau[:, None, :]
    den = phi[None, :, :] - tau[:, None, :] - punishment
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((num > 0) & (den > 0), num / den, 0.0)
    return np.clip(ratio.max(axis=(1, 2)), 0.0, 1.0)


def min_audit_experiments(cfg: MechanismConfig, table: GapTable, revenue: float | None = None) -> AuditPlan:
    """Minimal probabilities of auditing the registered experiment, per reported s.

    Args:
        cfg (MechanismConfig): The environment, with per-bidder punishments.
        table (GapTable): Value tables of the symmetric equilibrium.
        revenue (float | None): Full-verification revenue to charge the expected audit cost against.

    Returns:
        AuditPlan: q of shape (n, S).
    """
    psi = noncompliant_table(table)
    q = np.stack([experiment_audit_probability(table.phi, psi, cfg.penalty(i)) for i in range(cfg.n)])
    cost = float(np.sum(cfg.audit_experiment_curve(q) @ cfg.type_grid.ws))
    plan = AuditPlan(AuditRegime.EXPERIMENT, cfg.type_grid.s, q, cost, None if revenue is None else revenue - cost)
    logger.info(
        "Experiment audit plan",
        extra={"context": "audit.min_audit_experiments", "q": q.tolist(), "expected_audit_cost": cost},
    )
    return plan


def min_audit_costs(
    cfg: MechanismConfig, fee_rs: FeeSchedule, table: GapTable, revenue: float | None = None
) -> AuditPlan:
    """Minimal probabilities of auditing the reported cost scale r', given (r, s)-indexed fees.

    Args:
        cfg (MechanismConfig): The environment.
        fee_rs (FeeSchedule): Fees of shape (R, S) from the per-r chain closure.
        table (GapTable): Value tables providing Phi.
        revenue (float | None): Revenue under fee_rs to charge the expected audit cost against.

    Returns:
        AuditPlan: q of shape (n, R).
    """
    tau = fee_rs.table()
    q = np.stack([cost_audit_probability(tau, table.phi, cfg.penalty(i)) for i in range(cfg.n)])
    cost = float(np.sum(cfg.audit_cost_curve(q) @ cfg.type_grid.wr))
    plan = AuditPlan(AuditRegime.COST, cfg.type_grid.r, q, cost, None if revenue is None else revenue - cost)
    logger.info(
        "Cost audit plan",
        extra={"context": "audit.min_audit_costs", "q": q.tolist(), "expected_audit_cost": cost},
    )
    return plan


def no_audit_regime(cfg: MechanismConfig) -> NoAuditResult:
    """Solve the game without mean constraints and charge the flat fee min_(r,s) Phi^na(r, s).

    Returns:
        NoAuditResult: The unconstrained equilibrium, Phi^na, the per-bidder flat fee, the expected
            stage-2 payment and the revenue payment + sum of fees.
    """
    eq = solve_equilibrium(cfg, constrained=False)
    types = cfg.type_grid
    fee = np.empty(cfg.n)
    phi = np.empty((cfg.n, *types.shape))
    for i in range(cfg.n):
        curve = interim_curve(opponent_mixture(eq.profile, types, i), cfg.value_grid)
        for (ri, si), _ in np.ndenumerate(phi[i]):
            phi[i, ri, si] = solve_response(types.r[ri], types.s[si], curve, cfg, constrained=False).value
        fee[i] = phi[i].min()

    mixtures = np.einsum("rs,irsk->ik", types.weights, eq.profile.mass)
    payment = expected_second_highest(mixtures, cfg.value_grid)
    revenue = payment + float(fee.sum())
    logger.info(
        "No-audit regime",
        extra={"context": "audit.no_audit_regime", "fee": fee.tolist(), "payment": payment, "revenue": revenue},
    )
    return NoAuditResult(eq, phi, fee, payment, revenue)
