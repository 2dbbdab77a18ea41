"""Executable checks of the optimality argument on tabulated mechanisms."""

from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import Any, Callable, Dict, List, Literal, NamedTuple

import numpy as np

from .errors import InfeasibleMechanismError, UnboundedFeeError
from .fees import (
    FeeSchedule,
    GapTable,
    chain_closure_fee,
    dominance_check,
    random_feasible_fees,
    value_tables,
    verify_feasible,
)
from .log import Logger
from .potential import potential, solve_equilibrium, solve_response, type_costs
from .simulator import Mechanism
from .types.cost import CostVariant
from .types.experiment import mean_constrained_vertices
from .types.grid import TypeGrid, ValueGrid
from .types.mechanism import MechanismConfig
from .types.profile import StrategyProfile
from .vcg import allocate, interim_curve, opponent_mixture

logger = Logger()

Rule = Literal["vcg", "first-price", "random-dictator", "mixture"]


def stage2_tables(rule: Rule, grid: ValueGrid, n: int, beta: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate a stage-2 rule over all bid-grid profiles.

    Returns:
        tuple[np.ndarray, np.ndarray]: Win probabilities p and expected payments x, each of shape
            (m + 1,) * n + (n,).
    """
    M = grid.size
    z = grid.points
    p = np.zeros((M,) * n + (n,))
    x = np.zeros((M,) * n + (n,))
    for idx in product(range(M), repeat=n):
        outcome = allocate(z[list(idx)])
        match rule:
            case "vcg":
                p[idx], x[idx] = outcome.win_prob, outcome.expected_payments
            case "first-price":
                p[idx], x[idx] = outcome.win_prob, outcome.win_prob * z[list(idx)]
            case "random-dictator":
                p[idx] = 1.0 / n
            case "mixture":
                p[idx] = beta * outcome.win_prob + (1.0 - beta) / n
                x[idx] = beta * outcome.expected_payments
    return p, x


class TabulatedMechanism(NamedTuple):
    """A two-stage mechanism with an explicit stage-2 table; fees have shape (n, R, S)."""

    name: str
    p: np.ndarray
    x: np.ndarray
    profile: StrategyProfile
    fees: np.ndarray

    @classmethod
    def from_mechanism(
        cls, mechanism: Mechanism, rule: Rule = "vcg", beta: float = 1.0, name: str | None = None
    ) -> "TabulatedMechanism":
        p, x = stage2_tables(rule, mechanism.profile.grid, mechanism.profile.n, beta)
        return cls(name or rule, p, x, mechanism.profile, mechanism.fees)

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def types(self) -> TypeGrid:
        return self.profile.types


class Violation(NamedTuple):
    constraint: str
    bidder: int
    where: Dict[str, float]
    slack: float

    def to_dict(self) -> Dict[str, Any]:
        return {"constraint": self.constraint, "bidder": self.bidder, **self.where, "slack": self.slack}


class FeasibilityCheck(NamedTuple):
    violations: List[Violation]

    @property
    def feasible(self) -> bool:
        return not self.violations

    def count(self, constraint: str) -> int:
        return sum(v.constraint == constraint for v in self.violations)


class MechanismValue(NamedTuple):
    revenue: float
    welfare: float
    rents: float
    surplus: float
    info_cost: float
    rents_by_type: np.ndarray


class CheckResult(NamedTuple):
    name: str
    passed: bool
    details: Dict[str, Any]


class VerificationReport(NamedTuple):
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checks": {c.name: {"passed": bool(c.passed), **c.details} for c in self.checks}}

    def to_text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}" for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _mixtures(profile: StrategyProfile) -> np.ndarray:
    return np.einsum("rs,irsk->ik", profile.types.weights, profile.mass)


def _contract(table: np.ndarray, i: int, mixtures: np.ndarray) -> np.ndarray:
    """Average a per-profile table over the opponents of bidder i, keeping i's own bid axis."""
    arr = np.moveaxis(table, i, 0)
    for j in range(mixtures.shape[0]):
        if j != i:
            arr = np.tensordot(arr, mixtures[j], axes=([1], [0]))
    return arr


def interim_matrices(m: TabulatedMechanism) -> np.ndarray:
    """U[i, k, l]: expected stage-2 utility of bidder i with value z_k bidding z_l, opponents truthful."""
    g = _mixtures(m.profile)
    z = m.profile.grid.points
    U = np.empty((m.n, z.size, z.size))
    for i in range(m.n):
        P = _contract(m.p[..., i], i, g)
        X = _contract(m.x[..., i], i, g)
        U[i] = z[:, None] * P[None, :] - X[None, :]
    return U


def stage1_values(m: TabulatedMechanism, cfg: MechanismConfig) -> np.ndarray:
    """Pre-fee menu values B[i, theta, theta'] = u_i(sigma(theta')) - c_theta(sigma(theta')), types flattened."""
    U = interim_matrices(m)
    z = cfg.value_grid.points
    model = cfg.cost_model
    R, S = m.types.shape
    r = np.repeat(m.types.r, S)
    z_s = np.tile(cfg.z_s, R)
    values = np.empty((m.n, R * S, R * S))
    for i in range(m.n):
        menu = m.profile.mass[i].reshape(R * S, z.size)
        u = menu @ np.diag(U[i])
        if model.variant is CostVariant.ANCHOR_AT_S:
            anchor = np.broadcast_to(z_s[:, None], (R * S, R * S))
        else:
            anchor = np.broadcast_to((menu @ z)[None, :], (R * S, R * S))
        cost = r[:, None] * np.einsum("tuk,uk->tu", model.k(z[None, None, :] - anchor[..., None]), menu)
        values[i] = u[None, :] - cost
    return values


def _stage1_violations(values: np.ndarray, fees: np.ndarray, types: TypeGrid, tol: float) -> List[Violation]:
    R, S = types.shape
    r, s = np.repeat(types.r, S), np.tile(types.s, R)
    violations = []
    for i in range(values.shape[0]):
        V = values[i] - fees[i].ravel()[None, :]
        own = np.diag(V)
        for t in np.flatnonzero(own < -tol):
            violations.append(Violation("stage1-IR", i, {"r": float(r[t]), "s": float(s[t])}, float(own[t])))
        slack = own[:, None] - V
        for t, u in zip(*np.nonzero(slack < -tol)):
            where = {"r": float(r[t]), "s": float(s[t]), "r_reported": float(r[u]), "s_reported": float(s[u])}
            violations.append(Violation("stage1-IC", i, where, float(slack[t, u])))
    return violations


def check_feasibility(m: TabulatedMechanism, cfg: MechanismConfig) -> FeasibilityCheck:
    """Exhaustive check of the stage-2 and stage-1 IR and IC constraints.

    Stage 2 is checked for every value in the support of the bidder's own mixture against every grid
    bid. Stage 1 compares each type's menu item with every other type's item, evaluated with the
    true type's cost.
    """
    tol = cfg.fee_tol
    z = cfg.value_grid.points
    U = interim_matrices(m)
    g = _mixtures(m.profile)
    violations: List[Violation] = []
    for i in range(m.n):
        for k in np.flatnonzero(g[i] > 0):
            truthful = U[i, k, k]
            if truthful < -tol:
                violations.append(Violation("stage2-IR", i, {"value": float(z[k])}, float(truthful)))
            best = int(np.argmax(U[i, k]))
            if U[i, k, best] > truthful + tol:
                where = {"value": float(z[k]), "bid": float(z[best])}
                violations.append(Violation("stage2-IC", i, where, float(truthful - U[i, k, best])))

    violations += _stage1_violations(stage1_values(m, cfg), m.fees, m.types, tol)
    logger.debug(
        "Feasibility check",
        extra={"context": "verifier.check_feasibility", "mechanism": m.name, "violations": len(violations)},
    )
    return FeasibilityCheck(violations)


def evaluate(m: TabulatedMechanism, cfg: MechanismConfig) -> MechanismValue:
    """Exact revenue, welfare and rents of a tabulated mechanism under truthful play."""
    g = _mixtures(m.profile)
    z = cfg.value_grid.points
    joint = g[0]
    for j in range(1, m.n):
        joint = np.multiply.outer(joint, g[j])

    values = np.stack(np.meshgrid(*([z] * m.n), indexing="ij"), axis=-1)
    surplus = float(np.sum(joint * np.sum(values * m.p, axis=-1)))
    payment = float(np.sum(joint * m.x.sum(axis=-1)))
    w = m.types.weights
    info_cost = float(np.einsum("rs,irs->", w, type_costs(m.profile.mass, cfg)))
    fees = float(np.einsum("rs,irs->", w, m.fees))

    own = np.stack([np.diag(v) for v in stage1_values(m, cfg)]) - m.fees.reshape(m.n, -1)
    rents_by_type = own.reshape(m.n, *m.types.shape)
    rents = float(np.einsum("rs,irs->", w, rents_by_type))
    return MechanismValue(payment + fees, surplus - info_cost, rents, surplus, info_cost, rents_by_type)


def lemma1_transform(m: TabulatedMechanism, cfg: MechanismConfig) -> TabulatedMechanism:
    """Swap stage 2 for the efficient rule and shift fees by u^e - u^m so every menu value is unchanged.

    Raises:
        InfeasibleMechanismError: If the input fails a feasibility constraint.
    """
    check = check_feasibility(m, cfg)
    if not check.feasible:
        raise InfeasibleMechanismError([v.to_dict() for v in check.violations])

    p_e, x_e = stage2_tables("vcg", cfg.value_grid, m.n)
    efficient = m._replace(name=f"{m.name}->vcg", p=p_e, x=x_e)
    u_m = np.stack([m.profile.mass[i] @ np.diag(U) for i, U in enumerate(interim_matrices(m))])
    u_e = np.stack([m.profile.mass[i] @ np.diag(U) for i, U in enumerate(interim_matrices(efficient))])
    return efficient._replace(fees=m.fees + u_e - u_m)


def menu_gap_table(m: TabulatedMechanism, cfg: MechanismConfig, bidder: int = 0) -> GapTable:
    """Gap table of one bidder read off the menu of a tabulated mechanism instead of re-solved best responses.

    A type misreporting s' takes the best item among the reports (r', s'), valued with its own cost.
    """
    R, S = m.types.shape
    B = stage1_values(m, cfg)[bidder].reshape(R, S, R, S)
    phi = np.einsum("rsrs->rs", B).copy()
    phi_mis = B.max(axis=2)
    H = np.min(phi[:, :, None] - phi_mis, axis=0)
    return GapTable(m.types, phi, phi_mis, H)


def priced_mechanism(
    profile: StrategyProfile, rule: Rule, cfg: MechanismConfig, beta: float = 1.0, name: str | None = None
) -> TabulatedMechanism:
    """Mechanism running `rule` on `profile`, each bidder charged the chain closure of its own menu gaps.

    Raises:
        UnboundedFeeError: If the menu gaps of some bidder contain a negative cycle.
    """
    p, x = stage2_tables(rule, cfg.value_grid, profile.n, beta)
    m = TabulatedMechanism(name or rule, p, x, profile, np.zeros((profile.n, *profile.types.shape)))
    fees = np.stack(
        [
            np.broadcast_to(chain_closure_fee(menu_gap_table(m, cfg, i), cfg).fees, profile.types.shape)
            for i in range(profile.n)
        ]
    )
    return m._replace(fees=fees)


def optimal_mechanism(cfg: MechanismConfig) -> tuple[TabulatedMechanism, FeeSchedule]:
    """m* = (VCG, symmetric equilibrium, chain-closure fee)."""
    eq = solve_equilibrium(cfg)
    tau = chain_closure_fee(value_tables(eq.profile, cfg), cfg)
    return TabulatedMechanism.from_mechanism(Mechanism.build(eq.profile, tau.fees), name="m*"), tau


def _competitor_maps(cfg: MechanismConfig) -> List[np.ndarray]:
    """Symmetric maps placing one vertex of D(s) at every type, seeded subsample above competitor_limit."""
    types = cfg.type_grid
    R, S = types.shape
    per_s = [[f.mass for f in mean_constrained_vertices(cfg.value_grid, s, cfg.mean_tol)] for s in types.s]
    choices = [len(per_s[si]) for _ in range(R) for si in range(S)]
    total = int(np.prod(choices, dtype=float)) if choices else 0

    if total <= cfg.competitor_limit:
        combos = list(product(*[range(c) for c in choices]))
    else:
        rng = np.random.default_rng(cfg.seed)
        combos = [tuple(int(rng.integers(c)) for c in choices) for _ in range(cfg.competitor_limit)]

    maps = []
    for combo in combos:
        shared = np.stack([per_s[t % S][v] for t, v in enumerate(combo)]).reshape(R, S, -1)
        maps.append(shared)
    return maps


def theorem1_suite(cfg: MechanismConfig, m_star: TabulatedMechanism | None = None) -> CheckResult:
    """Compare m* against feasible competitors: symmetric vertex maps times each map's fee family.

    The fee family of a map is its flat fee min Phi(r-bar, .), its own chain-closure fee and
    `dominance_trials` projected random fees. Only competitors that pass the exhaustive feasibility
    check count.
    """
    if m_star is None:
        m_star, _ = optimal_mechanism(cfg)
    star = evaluate(m_star, cfg)
    tol = cfg.fee_tol
    n, types = cfg.n, cfg.type_grid

    counterexamples: List[Dict[str, Any]] = []
    feasible, examined = 0, 0
    best_revenue, best_welfare = (star.revenue, "m*"), (star.welfare, "m*")
    for k, shared in enumerate(_competitor_maps(cfg)):
        profile = StrategyProfile.symmetric(cfg.value_grid, types, shared, n)
        table = value_tables(profile, cfg)
        family = [np.full(types.shape[1], table.phi[types.top_r_index].min())]
        try:
            family.append(chain_closure_fee(table, cfg).fees)
        except UnboundedFeeError:
            pass
        family += list(random_feasible_fees(table, cfg.dominance_trials, cfg.seed + k))

        base = m_star._replace(name=f"map{k}", profile=profile, fees=np.zeros((n, *types.shape)))
        values = stage1_values(base, cfg)
        welfare = potential(profile, cfg).welfare
        payment = evaluate(base, cfg).revenue
        for fee in family:
            examined += 1
            fees = np.broadcast_to(fee, (n, *types.shape))
            if _stage1_violations(values, fees, types, tol):
                continue
            feasible += 1
            revenue = payment + float(np.einsum("rs,irs->", types.weights, fees))
            if revenue > best_revenue[0] + tol:
                best_revenue = (revenue, f"map{k}")
            if welfare > best_welfare[0] + tol:
                best_welfare = (welfare, f"map{k}")
            if revenue > star.revenue + tol or welfare > star.welfare + tol:
                counterexamples.append(
                    {"map": k, "revenue": revenue, "welfare": welfare, "fee": [float(v) for v in fee]}
                )

    passed = not counterexamples and best_revenue[1] == best_welfare[1] == "m*"
    logger.info(
        "Optimality suite",
        extra={"context": "verifier.theorem1_suite", "examined": examined, "feasible": feasible, "passed": passed},
    )
    return CheckResult(
        "theorem1",
        passed,
        {
            "revenue_star": star.revenue,
            "welfare_star": star.welfare,
            "examined": examined,
            "feasible": feasible,
            "revenue_pick": best_revenue[1],
            "welfare_pick": best_welfare[1],
            "counterexamples": counterexamples[:20],
        },
    )


def random_profile(cfg: MechanismConfig, rng: np.random.Generator) -> StrategyProfile:
    """Every (bidder, type) gets a random mixture of two random vertices of its D(s)."""
    types = cfg.type_grid
    per_s = [[f.mass for f in mean_constrained_vertices(cfg.value_grid, s, cfg.mean_tol)] for s in types.s]
    mass = np.empty((cfg.n, *types.shape, cfg.value_grid.size))
    for i, ri, si in product(range(cfg.n), range(types.shape[0]), range(types.shape[1])):
        a, b = rng.integers(len(per_s[si]), size=2)
        lam = rng.random()
        mass[i, ri, si] = lam * per_s[si][a] + (1.0 - lam) * per_s[si][b]
    return StrategyProfile(cfg.value_grid, types, mass)


def potential_spot_check(cfg: MechanismConfig, trials: int, seed: int) -> CheckResult:
    """Unilateral swaps: the deviator's payoff change, read off tabulated VCG payoffs, equals the change in W^e."""
    rng = np.random.default_rng(seed)
    p, x = stage2_tables("vcg", cfg.value_grid, cfg.n)
    worst = 0.0
    for _ in range(trials):
        before = random_profile(cfg, rng)
        i = int(rng.integers(cfg.n))
        after_mass = before.mass.copy()
        after_mass[i] = random_profile(cfg, rng).mass[i]
        after = before._replace(mass=after_mass)

        payoff = []
        for prof in (before, after):
            m = TabulatedMechanism("swap", p, x, prof, np.zeros((cfg.n, *cfg.type_grid.shape)))
            payoff.append(evaluate(m, cfg).rents_by_type[i])
        delta_payoff = float(np.sum(cfg.type_grid.weights * (payoff[1] - payoff[0])))
        delta_welfare = potential(after, cfg).welfare - potential(before, cfg).welfare
        worst = max(worst, abs(delta_payoff - delta_welfare))
    return CheckResult("potential.identity", worst <= 1e-9, {"trials": trials, "max_abs_gap": worst})


def response_uniqueness(profile: StrategyProfile, cfg: MechanismConfig) -> CheckResult:
    """Diagnostic: whether every type's best response against the profile is a unique vertex.

    Ties are expected for kernels that are not strictly convex, so the check never fails.
    """
    types = cfg.type_grid
    ties = []
    for i in range(profile.n):
        curve = interim_curve(opponent_mixture(profile, types, i), cfg.value_grid)
        for (ri, si), _ in np.ndenumerate(types.weights):
            response = solve_response(types.r[ri], types.s[si], curve, cfg, constrained=profile.constrained)
            if not response.unique:
                ties.append({"bidder": i, "r": float(types.r[ri]), "s": float(types.s[si])})
    return CheckResult("diagnostic.uniqueness", True, {"unique": not ties, "ties": ties[:20]})


def _stage2_truthfulness(cfg: MechanismConfig, trials: int, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    p, x = stage2_tables("vcg", cfg.value_grid, cfg.n)
    violations = 0
    for _ in range(trials):
        profile = random_profile(cfg, rng)
        U = interim_matrices(TabulatedMechanism("vcg", p, x, profile, np.zeros((cfg.n, *cfg.type_grid.shape))))
        diag = np.diagonal(U, axis1=1, axis2=2)
        violations += int(np.sum(U.max(axis=2) > diag + 1e-12))
    return CheckResult("stage2.truthfulness", violations == 0, {"trials": trials, "violations": violations})


def verify_suite(
    cfg: MechanismConfig, m_star: TabulatedMechanism, tau: FeeSchedule, workers: int = 1, lemma_trials: int = 20
) -> VerificationReport:
    """Run every check against m* and merge the results by check name.

    Args:
        cfg (MechanismConfig): The environment.
        m_star (TabulatedMechanism): The solved mechanism.
        tau (FeeSchedule): Its chain-closure fee.
        workers (int): Threads running independent checks.
        lemma_trials (int): Seeded non-VCG mechanisms fed to lemma1_transform.

    Returns:
        VerificationReport: All checks sorted by name.
    """
    table = value_tables(m_star.profile, cfg)

    def feasibility() -> CheckResult:
        check = check_feasibility(m_star, cfg)
        return CheckResult(
            "feasibility.m_star", check.feasible, {"violations": [v.to_dict() for v in check.violations[:20]]}
        )

    def fees_feasible() -> CheckResult:
        report = verify_feasible(tau, table, cfg.fee_tol)
        return CheckResult("fees.feasible", report.feasible, {"worst": report.worst})

    def fees_dominance() -> CheckResult:
        report = dominance_check(tau, table, cfg.dominance_trials, cfg.seed, cfg.fee_tol)
        return CheckResult("fees.dominance", report.dominated, report.to_dict())

    def lemma1() -> CheckResult:
        rng = np.random.default_rng(cfg.seed)
        worst_rent, worst_revenue, worst_welfare = 0.0, np.inf, np.inf
        infeasible, rejected = 0, 0
        for k in range(lemma_trials):
            rule: Rule = "random-dictator" if k % 2 == 0 else "mixture"
            beta, reductions = float(rng.random()), rng.uniform(0, 0.1, size=cfg.n)
            try:
                priced = priced_mechanism(m_star.profile, rule, cfg, beta, name=f"{rule}{k}")
                variant = priced._replace(fees=priced.fees - reductions[:, None, None])
                transformed = lemma1_transform(variant, cfg)
            except (UnboundedFeeError, InfeasibleMechanismError) as exc:
                logger.debug(
                    "Skipped a lemma1 input",
                    extra={"context": "verifier.verify_suite", "rule": rule, "beta": beta, "error": str(exc)},
                )
                rejected += 1
                continue
            before = evaluate(variant, cfg)
            after = evaluate(transformed, cfg)
            infeasible += int(not check_feasibility(transformed, cfg).feasible)
            worst_rent = max(worst_rent, abs(after.rents - before.rents))
            worst_revenue = min(worst_revenue, after.revenue - before.revenue)
            worst_welfare = min(worst_welfare, after.welfare - before.welfare)
        passed = lemma_trials == 0 or rejected < lemma_trials
        passed = passed and infeasible == 0 and worst_rent <= 1e-9
        passed = passed and worst_revenue >= -cfg.fee_tol and worst_welfare >= -cfg.fee_tol
        return CheckResult(
            "lemma1",
            passed,
            {
                "trials": lemma_trials,
                "rejected_inputs": rejected,
                "infeasible_outputs": infeasible,
                "max_rent_change": worst_rent,
                "min_revenue_gain": float(worst_revenue) if np.isfinite(worst_revenue) else None,
                "min_welfare_gain": float(worst_welfare) if np.isfinite(worst_welfare) else None,
            },
        )

    def decomposition() -> CheckResult:
        value = evaluate(m_star, cfg)
        gap = abs(value.welfare - value.revenue - value.rents)
        return CheckResult("decomposition", gap <= 1e-9, {"gap": gap})

    checks: List[Callable[[], CheckResult]] = [
        feasibility,
        fees_feasible,
        fees_dominance,
        lemma1,
        decomposition,
        lambda: potential_spot_check(cfg, 100, cfg.seed),
        lambda: _stage2_truthfulness(cfg, 20, cfg.seed),
        lambda: theorem1_suite(cfg, m_star),
        lambda: response_uniqueness(m_star.profile, cfg),
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda check: check(), checks))
    else:
        results = [check() for check in checks]

    report = VerificationReport(sorted(results, key=lambda c: c.name))
    logger.info(
        "Verification finished",
        extra={
            "context": "verifier.verify_suite",
            "passed": report.passed,
            "failed": [c.name for c in results if not c.passed],
        },
    )
    return report
