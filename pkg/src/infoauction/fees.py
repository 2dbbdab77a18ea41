"""Pre-fee value tables, misreport gaps and the chain-closure fee schedule."""

from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import Any, Dict, Iterator, NamedTuple

import networkx as nx
import numpy as np
import pandas as pd

from .errors import ConfigurationError, UnboundedFeeError
from .log import Logger
from .potential import solve_response
from .types.grid import TypeGrid
from .types.mechanism import MechanismConfig
from .types.profile import StrategyProfile
from .vcg import interim_curve, opponent_mixture

logger = Logger()

SOURCE = "source"


class GapTable(NamedTuple):
    """Phi[r, s], PhiMis[r, s, s'] = Phi(r, s' | r, s) and H[s, s'] = min_r (Phi - PhiMis) of one bidder."""

    types: TypeGrid
    phi: np.ndarray
    phi_mis: np.ndarray
    H: np.ndarray

    @property
    def H_rs(self) -> np.ndarray:
        """Per cost scale gaps H(s, s' | r), shape (R, S, S)."""
        return self.phi[:, :, None] - self.phi_mis

    def to_dict(self) -> Dict[str, Any]:
        return {
            "r": list(self.types.r_points),
            "s": list(self.types.s_points),
            "phi": self.phi.tolist(),
            "phi_mis": self.phi_mis.tolist(),
            "H": self.H.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], types: TypeGrid) -> "GapTable":
        return cls(types, np.asarray(data["phi"]), np.asarray(data["phi_mis"]), np.asarray(data["H"]))


class FeeSchedule(NamedTuple):
    """Stage-1 fee of one bidder, indexed by s, or by (r, s) for the cost-audit extension."""

    types: TypeGrid
    fees: np.ndarray

    @property
    def indexed_by_r(self) -> bool:
        return self.fees.ndim == 2

    def table(self) -> np.ndarray:
        """Fees broadcast over the r-grid, shape (R, S)."""
        return np.broadcast_to(self.fees, self.types.shape) if not self.indexed_by_r else self.fees

    def to_frame(self) -> pd.DataFrame:
        if not self.indexed_by_r:
            return pd.DataFrame({"s": self.types.s, "fee": self.fees})
        r, s = np.meshgrid(self.types.r, self.types.s, indexing="ij")
        return pd.DataFrame({"r": r.ravel(), "s": s.ravel(), "fee": self.fees.ravel()})


class FeasibilityReport(NamedTuple):
    feasible: bool
    ir_slack: np.ndarray
    ic_slack: np.ndarray
    worst: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feasible": self.feasible,
            "ir_slack": self.ir_slack.tolist(),
            "ic_slack": self.ic_slack.tolist(),
            "worst": self.worst,
        }


class DominanceReport(NamedTuple):
    dominated: bool
    trials: int
    max_excess: float
    worst_trial: int | None

    def to_dict(self) -> Dict[str, Any]:
        return self._asdict()


def value_tables(profile: StrategyProfile, cfg: MechanismConfig, bidder: int = 0, workers: int = 1) -> GapTable:
    """Solve the misreport problem of every (r, s, s') cell for one bidder against the others' strategies.

    Args:
        profile (StrategyProfile): Equilibrium profile.
        cfg (MechanismConfig): The environment.
        bidder (int): Whose tables to build.
        workers (int): Threads used over the cells.

    Returns:
        GapTable: Phi, PhiMis and H.
    """
    types = cfg.type_grid
    curve = interim_curve(opponent_mixture(profile, types, bidder), cfg.value_grid)
    R, S = types.shape
    cells = list(product(range(R), range(S), range(S)))

    def solve(cell: tuple[int, int, int]) -> float:
        ri, si, sj = cell
        return solve_response(types.r[ri], types.s[si], curve, cfg, report=types.s[sj]).value

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(solve, cells))
    else:
        values = [solve(cell) for cell in cells]

    phi_mis = np.asarray(values).reshape(R, S, S)
    phi = np.einsum("rss->rs", phi_mis).copy()
    H = np.min(phi[:, :, None] - phi_mis, axis=0)
    if np.any(H < -cfg.fee_tol):
        s, t = np.unravel_index(np.argmin(H), H.shape)
        logger.warning(
            "Negative misreport gap",
            extra={"context": "fees.value_tables", "s": types.s[s], "s_reported": types.s[t], "H": float(H[s, t])},
        )
    logger.info("Value tables built", extra={"context": "fees.value_tables", "bidder": bidder, "cells": len(cells)})
    return GapTable(types, phi, phi_mis, H)


def _closure(source: np.ndarray, H: np.ndarray, s_points: np.ndarray, fee_tol: float) -> np.ndarray:
    """Shortest paths from a virtual source with edges source -> s (source[s]) and s' -> s (H[s, s'])."""
    S = source.size
    graph = nx.DiGraph()
    graph.add_node(SOURCE)
    for s in range(S):
        graph.add_edge(SOURCE, s, weight=float(source[s]))
    for s, t in product(range(S), repeat=2):
        if s != t:
            graph.add_edge(t, s, weight=float(H[s, t]))

    weights = [w for _, _, w in graph.edges(data="weight")]
    try:
        if min(weights) >= 0:
            lengths = nx.single_source_dijkstra_path_length(graph, SOURCE)
        else:
            lengths = nx.single_source_bellman_ford_path_length(graph, SOURCE)
        return np.array([lengths[s] for s in range(S)])
    except nx.NetworkXUnbounded:
        cycle = nx.find_negative_cycle(graph, SOURCE)
        weight = float(sum(graph[u][v]["weight"] for u, v in zip(cycle[:-1], cycle[1:])))
        if weight < -fee_tol:
            raise UnboundedFeeError([float(s_points[c]) for c in cycle], weight)

        logger.warning(
            "Tolerated a numerically zero negative cycle",
            extra={"context": "fees._closure", "cycle": cycle, "weight": weight},
        )
        # |V| - 1 relaxation rounds
        distance = source.astype(float).copy()
        for _ in range(S):
            distance = np.minimum(distance, np.min(distance[None, :] + H, axis=1))
        return distance


def chain_closure_fee(table: GapTable, cfg: MechanismConfig) -> FeeSchedule:
    """Largest fee schedule with tau(s) <= Phi(r-bar, s) and tau(s) <= tau(s') + H(s, s').

    Raises:
        UnboundedFeeError: If the gaps contain a cycle of weight below -fee_tol.
    """
    fees = _closure(table.phi[table.types.top_r_index], table.H, table.types.s, cfg.fee_tol)
    logger.info("Chain-closure fee", extra={"context": "fees.chain_closure_fee", "fees": fees.tolist()})
    return FeeSchedule(table.types, fees)


def chain_closure_fee_rs(table: GapTable, cfg: MechanismConfig) -> FeeSchedule:
    """Chain closure at every fixed r with source Phi(r, s) and gaps H(s, s' | r), shape (R, S)."""
    H_rs = table.H_rs
    fees = np.stack(
        [_closure(table.phi[ri], H_rs[ri], table.types.s, cfg.fee_tol) for ri in range(table.types.shape[0])]
    )
    return FeeSchedule(table.types, fees)


def verify_feasible(tau: FeeSchedule, table: GapTable, fee_tol: float = 1e-8) -> FeasibilityReport:
    """Check the IR bound at r-bar and every pairwise IC inequality.

    Slacks are bound minus fee, so negative slack beyond fee_tol is a violation.
    """
    if tau.fees.shape != (table.types.shape[1],):
        raise ConfigurationError("fee schedule and gap table use different s-grids")

    s = table.types.s
    ir_slack = table.phi[table.types.top_r_index] - tau.fees
    ic_slack = tau.fees[None, :] + table.H - tau.fees[:, None]

    worst: Dict[str, Any] = {"constraint": None, "slack": 0.0}
    i = int(np.argmin(ir_slack))
    if ir_slack[i] < worst["slack"]:
        worst = {"constraint": "IR", "s": float(s[i]), "slack": float(ir_slack[i])}
    a, b = np.unravel_index(np.argmin(ic_slack), ic_slack.shape)
    if ic_slack[a, b] < worst["slack"]:
        worst = {"constraint": "IC", "s": float(s[a]), "s_reported": float(s[b]), "slack": float(ic_slack[a, b])}

    feasible = bool(ir_slack.min() >= -fee_tol and ic_slack.min() >= -fee_tol)
    return FeasibilityReport(feasible, ir_slack, ic_slack, worst)


def project_feasible(start: np.ndarray, table: GapTable) -> np.ndarray:
    """Pointwise-minimum projection onto the IR/IC constraint set, iterated to a fixpoint."""
    tau = np.minimum(start, table.phi[table.types.top_r_index])
    for _ in range(tau.size + 1):
        nxt = np.minimum(tau, np.min(tau[None, :] + table.H, axis=1))
        if np.array_equal(nxt, tau):
            break
        tau = nxt
    return tau


def random_feasible_fees(table: GapTable, trials: int, seed: int) -> Iterator[np.ndarray]:
    """Seeded random members of the feasible fee set."""
    rng = np.random.default_rng(seed)
    bound = table.phi[table.types.top_r_index]
    lo, hi = float(bound.min()) - 1.0, float(bound.max()) + 1.0
    for _ in range(trials):
        yield project_feasible(rng.uniform(lo, hi, size=bound.size), table)


def dominance_check(
    tau: FeeSchedule, table: GapTable, trials: int, seed: int, fee_tol: float = 1e-8
) -> DominanceReport:
    """Compare `tau` against random feasible schedules; it dominates when none exceeds it anywhere."""
    max_excess, worst_trial = -np.inf, None
    for k, other in enumerate(random_feasible_fees(table, trials, seed)):
        excess = float(np.max(other - tau.fees))
        if excess > max_excess:
            max_excess, worst_trial = excess, k

    # the flat IR bound only competes after projection onto the IC set
    flat = project_feasible(np.full_like(tau.fees, table.phi[table.types.top_r_index].min()), table)
    max_excess = max(max_excess, float(np.max(flat - tau.fees)))
    dominated = max_excess <= fee_tol
    logger.info(
        "Dominance check",
        extra={"context": "fees.dominance_check", "trials": trials, "max_excess": max_excess, "dominated": dominated},
    )
    return DominanceReport(dominated, trials, max_excess, worst_trial)
