"""Welfare potential of the stage-1 experiment game and its symmetric maximization."""

from typing import Any, Callable, Dict, List, NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InfeasibilityError
from .log import Logger
from .types.cost import CostModel, CostVariant
from .types.experiment import Experiment, make_mean_constrained
from .types.mechanism import MechanismConfig
from .types.profile import StrategyProfile
from .vcg import InterimCurve, expected_max, interim_curve, opponent_mixture

logger = Logger()

TIE_TOL = 1e-12


class PotentialReport(NamedTuple):
    """W^e = surplus - info_cost together with each bidder's net interim payoff."""

    welfare: float
    surplus: float
    info_cost: float
    payoffs: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "welfare": self.welfare,
            "surplus": self.surplus,
            "info_cost": self.info_cost,
            "payoffs": [float(p) for p in self.payoffs],
        }


class Response(NamedTuple):
    """Optimal vertex experiment, its objective value and whether no other vertex ties with it."""

    experiment: Experiment
    value: float
    support: tuple[int, int]
    unique: bool


class Equilibrium(NamedTuple):
    profile: StrategyProfile
    report: PotentialReport
    epsilon: float
    iterations: int
    flagged: bool
    history: List[float]


def type_costs(mass: np.ndarray, cfg: MechanismConfig) -> np.ndarray:
    """Information cost of every assigned experiment; mass has trailing axes (R, S, m + 1)."""
    model = cfg.cost_model
    z = cfg.value_grid.points
    if model.variant is CostVariant.ANCHOR_AT_S:
        anchor = np.broadcast_to(cfg.z_s[None, :], mass.shape[:-1])
    else:
        anchor = mass @ z
    r = cfg.type_grid.r[:, None, None]
    coef = r * model.k(z - anchor[..., None])
    return np.sum(coef * mass, axis=-1)


def potential(profile: StrategyProfile, cfg: MechanismConfig) -> PotentialReport:
    """Evaluate W^e(profile) exactly on the grid.

    Args:
        profile (StrategyProfile): A complete profile.
        cfg (MechanismConfig): The environment.

    Returns:
        PotentialReport: Welfare, expected surplus E[max t], expected cost and per-bidder payoffs.
    """
    w = cfg.type_grid.weights
    mixtures = np.einsum("rs,irsk->ik", w, profile.mass)
    costs = type_costs(profile.mass, cfg)
    surplus = expected_max(mixtures, cfg.value_grid)
    info_cost = float(np.einsum("rs,irs->", w, costs))

    payoffs = np.empty(profile.n)
    for i in range(profile.n):
        curve = interim_curve(np.delete(mixtures, i, axis=0), cfg.value_grid)
        payoffs[i] = np.einsum("rs,rsk,k->", w, profile.mass[i], curve.pi) - np.sum(w * costs[i])

    return PotentialReport(surplus - info_cost, surplus, info_cost, payoffs)


def solve_response(
    r: float,
    s: float,
    curve: InterimCurve,
    cfg: MechanismConfig,
    report: float | None = None,
    constrained: bool = True,
) -> Response:
    """Best experiment of the true type (r, s) when its mean must match the reported center.

    The objective sum_j mass_j (pi_j - r k(|z_j - anchor|)) is linear on a polytope with two
    equality constraints, so some vertex with at most two support points is optimal. Vertices are
    enumerated and the lexicographically smallest (j_low, j_high) among the maximizers is returned.

    Args:
        r (float): True cost scale.
        s (float): True mean-value parameter, the cost anchor of the ĉ variant.
        curve (InterimCurve): Interim payoffs against the current opponents.
        cfg (MechanismConfig): The environment.
        report (float | None): Reported mean-value parameter fixing the center, defaults to s.
        constrained (bool): Whether the mean constraint applies at all.

    Returns:
        Response: The optimal vertex.

    Raises:
        InfeasibilityError: If the center lies outside [a, b].
    """
    grid = cfg.value_grid
    model: CostModel = cfg.cost_model
    z = grid.points
    alpha = s if report is None else report
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= s <= 1.0:
        raise InfeasibilityError(f"D({alpha}) is empty, the center must lie in [a, b]")

    if not constrained:
        if model.variant is CostVariant.ANCHOR_AT_S:
            values = curve.pi - r * model.k(z - grid.center(s))
        else:
            values = curve.pi.copy()  # a point mass sits on its own mean
        j = int(np.argmax(values >= values.max() - TIE_TOL))
        unique = int(np.sum(values >= values.max() - TIE_TOL)) == 1
        return Response(Experiment.point(grid, j), float(values[j]), (j, j), unique)

    center = grid.center(alpha)
    obj = curve.pi - model.coefficients(r, s, center)

    lo, hi = np.meshgrid(np.arange(grid.size), np.arange(grid.size), indexing="ij")
    zl, zh = z[lo], z[hi]
    single = (lo == hi) & (np.abs(zl - center) <= cfg.mean_tol)
    pair = (lo < hi) & (zl < center - cfg.mean_tol) & (zh > center + cfg.mean_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_hi = np.where(pair, (center - zl) / (zh - zl), 0.0)
    values = np.where(single | pair, (1.0 - w_hi) * obj[lo] + w_hi * obj[hi], -np.inf)

    best = values.max()
    if not np.isfinite(best):
        raise InfeasibilityError(f"no grid experiment has mean {center!r}")
    ties = (values >= best - TIE_TOL).ravel()
    flat = int(np.argmax(ties))  # row-major order is lexicographic in (j_low, j_high)
    j_lo, j_hi = int(lo.ravel()[flat]), int(hi.ravel()[flat])
    f = Experiment.from_support(grid, j_lo, j_hi, center)
    return Response(f, float(f.mass @ obj), (j_lo, j_hi), int(ties.sum()) == 1)


def best_response(i: int, r: float, s: float, curve: InterimCurve, cfg: MechanismConfig) -> Experiment:
    """Optimal member of D(s) for bidder i of type (r, s) facing `curve`."""
    response = solve_response(r, s, curve, cfg)
    logger.debug(
        "Best response",
        extra={"context": "potential.best_response", "bidder": i, "r": r, "s": s, "support": response.support},
    )
    return response.experiment


def symmetrize(profile: StrategyProfile) -> StrategyProfile:
    """Average the bidders' maps type by type; centers are preserved by linearity."""
    shared = profile.mass.mean(axis=0)
    return StrategyProfile.symmetric(profile.grid, profile.types, shared, profile.n, profile.constrained)


def deviation_gains(profile: StrategyProfile, cfg: MechanismConfig) -> np.ndarray:
    """Best unilateral improvement of every (bidder, r, s), shape (n, R, S)."""
    types = cfg.type_grid
    costs = type_costs(profile.mass, cfg)
    gains = np.zeros((profile.n, *types.shape))
    for i in range(profile.n):
        curve = interim_curve(opponent_mixture(profile, types, i), cfg.value_grid)
        current = profile.mass[i] @ curve.pi - costs[i]
        for (ri, si), _ in np.ndenumerate(current):
            best = solve_response(types.r[ri], types.s[si], curve, cfg, constrained=profile.constrained)
            gains[i, ri, si] = max(best.value - current[ri, si], 0.0)
    return gains


def _shared_welfare(shared: np.ndarray, cfg: MechanismConfig) -> float:
    g = np.einsum("rs,rsk->k", cfg.type_grid.weights, shared)
    mixtures = np.broadcast_to(g, (cfg.n, g.size))
    costs = type_costs(shared, cfg)
    return expected_max(mixtures, cfg.value_grid) - cfg.n * float(np.sum(cfg.type_grid.weights * costs))


def _initial_map(cfg: MechanismConfig) -> np.ndarray:
    R, S = cfg.type_grid.shape
    shared = np.empty((R, S, cfg.value_grid.size))
    for si, s in enumerate(cfg.type_grid.s):
        shared[:, si] = make_mean_constrained(cfg.value_grid, s, "degenerate", cfg.mean_tol).mass
    return shared


def _line_search(shared: np.ndarray, target: np.ndarray, cfg: MechanismConfig) -> tuple[np.ndarray, float]:
    """Maximize W^e on the segment from `shared` to `target`.

    Along the segment the surplus is a polynomial of degree n in the step, the ĉ cost is linear;
    the polynomial is interpolated on n + 1 steps and its stationary points are re-evaluated exactly.
    """
    steps = np.linspace(0.0, 1.0, cfg.n + 1)
    values = [_shared_welfare(shared + t * (target - shared), cfg) for t in steps]
    poly = Polynomial.fit(steps, values, deg=cfg.n).convert()
    roots = poly.deriv().roots()
    candidates = [1.0] + [float(t.real) for t in roots if abs(t.imag) < 1e-12 and 0.0 < t.real < 1.0]
    scored = [(_shared_welfare(shared + t * (target - shared), cfg), t) for t in candidates]
    best_value, best_t = max(scored)
    return shared + best_t * (target - shared), best_value


def solve_equilibrium(cfg: MechanismConfig, constrained: bool = True) -> Equilibrium:
    """Ascend W^e over symmetric profiles by best-response moves.

    Every sweep computes, for each type, the best response to the mixture the others induce. A type
    whose best response beats its current experiment by more than `solver_tol` is improving. The
    sweep then accepts the first of these moves that does not lower W^e: switching every improving
    type at once, switching a single improving type (largest gain first), or the best point on the
    segment towards the full switch. The ascent stops when no type improves, when the accepted step
    raises W^e by less than `solver_tol`, or after `max_iters` sweeps (flagged). A sweep in which
    every move lowers W^e while improving types remain also ends the ascent flagged.

    Args:
        cfg (MechanismConfig): The environment.
        constrained (bool): Keep the mean constraints; False solves the no-audit game.

    Returns:
        Equilibrium: The profile, its potential report, the deviation bound epsilon, iteration count,
            the max-iterations flag and the W^e history.
    """
    types = cfg.type_grid
    shared = _initial_map(cfg)
    welfare = _shared_welfare(shared, cfg)
    history = [welfare]
    flagged = True
    iterations = 0

    for iterations in range(1, cfg.max_iters + 1):
        g = np.einsum("rs,rsk->k", types.weights, shared)
        curve = interim_curve(np.broadcast_to(g, (cfg.n - 1, g.size)), cfg.value_grid)
        current = shared @ curve.pi - type_costs(shared, cfg)

        target = shared.copy()
        gains = np.zeros(types.shape)
        for (ri, si), _ in np.ndenumerate(gains):
            response = solve_response(types.r[ri], types.s[si], curve, cfg, constrained=constrained)
            gains[ri, si] = response.value - current[ri, si]
            if gains[ri, si] > cfg.solver_tol:
                target[ri, si] = response.experiment.mass

        logger.debug(
            "Best-response sweep",
            extra={
                "context": "potential.solve_equilibrium",
                "iteration": iterations,
                "welfare": welfare,
                "max_gain": float(gains.max()),
            },
        )
        if gains.max() <= cfg.solver_tol:
            flagged = False
            break

        improving = sorted(zip(*np.nonzero(gains > cfg.solver_tol)), key=lambda c: -gains[c])
        moves: List[Callable[[], tuple[np.ndarray, float]]] = [lambda: (target, _shared_welfare(target, cfg))]
        for cell in improving:
            moves.append(lambda cell=cell: _single_switch(shared, target, cell, cfg))
        moves.append(lambda: _line_search(shared, target, cfg))

        accepted = None
        for move in moves:
            candidate, value = move()
            if value >= welfare:
                accepted = candidate, value
                break
        if accepted is None:
            # improving types remain but every move lowers W^e
            logger.warning(
                "Equilibrium ascent stalled",
                extra={
                    "context": "potential.solve_equilibrium",
                    "iteration": iterations,
                    "max_gain": float(gains.max()),
                },
            )
            break

        shared, improvement = accepted[0], accepted[1] - welfare
        welfare = accepted[1]
        history.append(welfare)
        if improvement < cfg.solver_tol:
            flagged = False
            break

    if flagged and iterations == cfg.max_iters:
        logger.warning(
            "Equilibrium search hit max_iters",
            extra={"context": "potential.solve_equilibrium", "max_iters": cfg.max_iters},
        )

    profile = StrategyProfile.symmetric(cfg.value_grid, types, shared, cfg.n, constrained)
    epsilon = float(deviation_gains(profile, cfg).max())
    report = potential(profile, cfg)
    logger.info(
        "Equilibrium solved",
        extra={
            "context": "potential.solve_equilibrium",
            "welfare": report.welfare,
            "epsilon": epsilon,
            "iterations": iterations,
            "flagged": flagged,
        },
    )
    return Equilibrium(profile, report, epsilon, iterations, flagged, history)


def _single_switch(
    shared: np.ndarray, target: np.ndarray, cell: tuple[int, int], cfg: MechanismConfig
) -> tuple[np.ndarray, float]:
    candidate = shared.copy()
    candidate[cell] = target[cell]
    return candidate, _shared_welfare(candidate, cfg)
