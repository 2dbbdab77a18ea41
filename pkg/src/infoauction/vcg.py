"""Stage-2 efficient rule: allocation, payments and the interim payoff curve under truthful opponents."""

from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DomainError
from .types.grid import TypeGrid, ValueGrid
from .types.profile import StrategyProfile


class Outcome(NamedTuple):
    """Winning probabilities and winner-contingent charges of one bid profile."""

    win_prob: np.ndarray
    payments: np.ndarray

    @property
    def expected_payments(self) -> np.ndarray:
        return self.win_prob * self.payments


class InterimCurve(NamedTuple):
    """pi[j] is the expected stage-2 payoff of value z_j bid truthfully against the opponents."""

    grid: ValueGrid
    pi: np.ndarray
    opp_max_cdf: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"z": self.grid.points, "pi": self.pi, "opp_max_cdf": self.opp_max_cdf})


def allocate(bids: Sequence[float] | np.ndarray) -> Outcome:
    """Give the object to the highest bid, split ties evenly, charge the highest competing bid.

    Args:
        bids (Sequence[float] | np.ndarray): One bid per bidder.

    Returns:
        Outcome: p sums to 1; a winner's charge is the highest other bid, losers pay 0.

    Raises:
        DomainError: If no bid was submitted.
    """
    t = np.asarray(bids, dtype=float)
    if t.size == 0:
        raise DomainError("cannot allocate without bids")

    winners = t == t.max()
    win_prob = winners / winners.sum()
    if t.size == 1:
        return Outcome(win_prob, np.zeros(1))

    # highest bid among the others: second order statistic for the top bidder, the top otherwise
    top2 = np.sort(t)[-2:]
    others_max = np.where(t == top2[1], top2[0], top2[1])
    return Outcome(win_prob, np.where(winners, others_max, 0.0))


def expost_payoff(i: int, value: float, bids: Sequence[float] | np.ndarray) -> float:
    """Expected ex-post payoff value * p_i - p_i * x_i of bidder i."""
    outcome = allocate(bids)
    return float(outcome.win_prob[i] * (value - outcome.payments[i]))


def opponent_mixture(profile: StrategyProfile, type_grid: TypeGrid, exclude: int) -> np.ndarray:
    """Type-marginalized value densities g_j of every bidder j != exclude.

    Returns:
        np.ndarray: Shape (n - 1, m + 1), each row sums to 1.

    Raises:
        ConfigurationError: If the profile does not cover the type grid.
    """
    if profile.mass.shape[1:3] != type_grid.shape or np.any(~np.isfinite(profile.mass)):
        raise ConfigurationError("profile leaves some grid types without an assignment")
    others = np.delete(profile.mass, exclude, axis=0)
    return np.einsum("rs,jrsk->jk", type_grid.weights, others)


def cdfs(mixtures: np.ndarray) -> np.ndarray:
    """Row-wise grid c.d.f.s G_j(z_k) = P(T_j <= z_k)."""
    return np.clip(np.cumsum(mixtures, axis=-1), 0.0, 1.0)


def interim_curve(mixtures: np.ndarray, grid: ValueGrid) -> InterimCurve:
    """Interim payoff E[(z_k - Y)^+] against the maximum Y of independent opponent draws.

    Ties pay the own value, so only strict wins contribute.

    Args:
        mixtures (np.ndarray): Opponent densities, shape (n - 1, m + 1).
        grid (ValueGrid): Shared value grid.

    Returns:
        InterimCurve: The curve and the c.d.f. of Y.
    """
    opp_max_cdf = np.prod(cdfs(np.atleast_2d(mixtures)), axis=0)
    z = grid.points
    increments = opp_max_cdf[:-1] * np.diff(z)
    pi = np.concatenate(([0.0], np.cumsum(increments)))
    return InterimCurve(grid, pi, opp_max_cdf)


def expected_max(mixtures: np.ndarray, grid: ValueGrid) -> float:
    """E[max_j T_j] for independent grid draws, via the product of c.d.f.s."""
    F = np.prod(cdfs(mixtures), axis=0)
    return float(grid.points @ np.diff(F, prepend=0.0))


def second_highest_cdf(mixtures: np.ndarray) -> np.ndarray:
    """P(second highest <= z_k) = prod G_j + sum_i (1 - G_i) prod_{j != i} G_j."""
    G = cdfs(mixtures)
    n = G.shape[0]
    all_below = np.prod(G, axis=0)
    one_above = sum((1.0 - G[i]) * np.prod(np.delete(G, i, axis=0), axis=0) for i in range(n))
    return np.clip(all_below + one_above, 0.0, 1.0)


def expected_second_highest(mixtures: np.ndarray, grid: ValueGrid) -> float:
    """Expected VCG price, the second order statistic of the bidders' values."""
    F2 = second_highest_cdf(mixtures)
    return float(grid.points @ np.diff(F2, prepend=0.0))
