import logging

import numpy as np
import pytest
from scipy.optimize import linprog

from infoauction import potential as potential_module
from infoauction.errors import InfeasibilityError
from infoauction.potential import (
    best_response,
    deviation_gains,
    potential,
    solve_equilibrium,
    solve_response,
    symmetrize,
    type_costs,
)
from infoauction.types.profile import StrategyProfile
from infoauction.vcg import interim_curve
from infoauction.verifier import random_profile

from .conftest import make_config


def _points_profile(cfg, bidder_points: list[int]) -> StrategyProfile:
    """Every type of bidder i plays the point mass at grid index bidder_points[i]."""
    mass = np.zeros((len(bidder_points), *cfg.type_grid.shape, cfg.value_grid.size))
    for i, j in enumerate(bidder_points):
        mass[i, ..., j] = 1.0
    return StrategyProfile(cfg.value_grid, cfg.type_grid, mass, constrained=False)


def _linear_program(pi, r, s, cfg):
    """Best objective over all experiments on the grid with mean z_s, solved as a plain LP."""
    z = cfg.value_grid.points
    center = cfg.value_grid.center(s)
    obj = pi - r * cfg.cost_model.k(z - center)
    res = linprog(-obj, A_eq=np.vstack([np.ones_like(z), z]), b_eq=[1.0, center], bounds=(0, None), method="highs")
    assert res.success
    return -res.fun


def test_potential_examples():
    free = make_config(r=(0.0,))
    assert potential(_points_profile(free, [4, 4]), free).welfare == pytest.approx(2.0)
    assert potential(_points_profile(free, [0, 0]), free).surplus == pytest.approx(1.0)

    coin = _points_profile(free, [0, 0])
    coin.mass[1] = [0.5, 0.0, 0.0, 0.0, 0.5]
    report = potential(coin, free)
    assert report.surplus == pytest.approx(1.5)
    assert report.welfare == pytest.approx(report.surplus - report.info_cost)


def test_potential_desk(desk, desk_map):
    profile = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    report = potential(profile, desk)
    assert report.welfare == pytest.approx(563 / 324)
    assert report.info_cost == pytest.approx(0.0)
    assert report.to_dict()["payoffs"] == pytest.approx([report.payoffs[0]] * 2)
    assert type_costs(profile.mass, desk).shape == (2, 3, 3)


def test_best_response_examples(desk):
    increasing = interim_curve(np.array([[1 / 3, 0, 1 / 3, 0, 1 / 3]]), desk.value_grid)
    f = best_response(0, 0.0, 0.5, increasing, desk)
    assert f.support == (0, 4)
    assert f.mass[[0, 4]] == pytest.approx([0.5, 0.5])

    flat = interim_curve(np.array([[0, 0, 0, 0, 1.0]]), desk.value_grid)
    assert best_response(0, 0.5, 0.5, flat, desk).support == (2,)
    assert best_response(0, 1.0, 0.0, increasing, desk).support == (0,)

    with pytest.raises(InfeasibilityError):
        solve_response(0.5, 1.2, flat, desk)


def test_best_response_matches_linear_program(desk, rng):
    for _ in range(500):
        curve = interim_curve(rng.dirichlet(np.ones(5), size=1), desk.value_grid)
        r, s = float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.0, 1.0))
        response = solve_response(r, s, curve, desk)
        assert len(response.experiment.support) <= 2
        assert response.value == pytest.approx(_linear_program(curve.pi, r, s, desk), abs=1e-9)
        response.experiment.validate(desk.mean_tol)


def test_best_response_lexicographic_tie_break(zero_cost):
    linear = interim_curve(np.array([[0.5, 0, 0, 0, 0.5]]), zero_cost.value_grid)
    response = solve_response(0.0, 0.5, linear, zero_cost)
    assert not response.unique
    assert response.support == (0, 3)


def test_unconstrained_response_takes_the_top_point(desk):
    curve = interim_curve(np.array([[1 / 3, 0, 1 / 3, 0, 1 / 3]]), desk.value_grid)
    response = solve_response(0.0, 0.0, curve, desk, constrained=False)
    assert response.support == (4, 4)


def test_solve_equilibrium_desk(desk, desk_map):
    eq = solve_equilibrium(desk)
    assert not eq.flagged
    np.testing.assert_allclose(eq.profile.mass[0], desk_map, atol=1e-12)
    assert eq.profile.is_symmetric
    assert eq.report.welfare == pytest.approx(563 / 324)
    assert eq.history[0] == pytest.approx(15.5 / 9)
    assert np.all(np.diff(eq.history) >= 0)
    assert eq.epsilon <= desk.solver_tol
    eq.profile.validate(desk.mean_tol)


def test_solve_equilibrium_free_information():
    cfg = make_config(r=(0.0,))
    eq = solve_equilibrium(cfg)
    assert eq.profile.mass[0, 0, 1] == pytest.approx([0.5, 0, 0, 0, 0.5])
    assert eq.report.welfare == pytest.approx(1.75)


def test_solve_equilibrium_prohibitive_cost(prohibitive):
    eq = solve_equilibrium(prohibitive)
    for si, j in enumerate([0, 2, 4]):
        assert eq.profile.mass[0, :, si, j] == pytest.approx([1.0, 1.0])


def test_solve_equilibrium_single_center():
    cfg = make_config(s=(0.0,))
    eq = solve_equilibrium(cfg)
    assert eq.report.welfare == pytest.approx(1.0)


def test_solve_equilibrium_flags_max_iters():
    cfg = make_config(max_iters=1)
    eq = solve_equilibrium(cfg)
    assert eq.flagged
    assert eq.iterations == 1


def test_solve_equilibrium_flags_a_stalled_ascent(desk, monkeypatch, caplog):
    # the start is W^e = 1 and every later candidate scores 0, so no move is accepted
    scores = iter([1.0])
    monkeypatch.setattr(potential_module, "_shared_welfare", lambda shared, cfg: next(scores, 0.0))
    with caplog.at_level(logging.WARNING, logger="infoauction"):
        eq = solve_equilibrium(desk)
    assert eq.flagged
    assert eq.iterations == 1
    assert eq.history == [1.0]
    assert eq.epsilon > desk.solver_tol
    assert "Equilibrium ascent stalled" in caplog.text
    assert "hit max_iters" not in caplog.text


def test_exact_potential_identity(desk, rng):
    for _ in range(100):
        before = random_profile(desk, rng)
        i = int(rng.integers(desk.n))
        mass = before.mass.copy()
        mass[i] = random_profile(desk, rng).mass[i]
        after = before._replace(mass=mass)
        gain = potential(after, desk).payoffs[i] - potential(before, desk).payoffs[i]
        assert gain == pytest.approx(potential(after, desk).welfare - potential(before, desk).welfare, abs=1e-9)


def test_potential_is_permutation_symmetric(rng):
    cfg = make_config(n=3)
    profile = random_profile(cfg, rng)
    swapped = profile._replace(mass=profile.mass[[2, 0, 1]])
    assert potential(swapped, cfg).welfare == pytest.approx(potential(profile, cfg).welfare, abs=1e-12)


def test_symmetrize(desk, desk_map, rng):
    symmetric = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    np.testing.assert_array_equal(symmetrize(symmetric).mass, symmetric.mass)

    mass = symmetric.mass.copy()
    mass[0, 0, 1] = [1.0, 0, 0, 0, 0]
    mass[1, 0, 1] = [0, 0, 0, 0, 1.0]
    averaged = symmetrize(symmetric._replace(mass=mass, constrained=False))
    assert averaged.mass[1, 0, 1] == pytest.approx([0.5, 0, 0, 0, 0.5])

    for _ in range(20):
        symmetrize(random_profile(desk, rng)).validate(desk.mean_tol)


def test_deviation_gains(desk, desk_map):
    start = np.zeros_like(desk_map)
    start[:, 0, 0] = start[:, 1, 2] = start[:, 2, 4] = 1.0
    initial = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, start, desk.n)
    gains = deviation_gains(initial, desk)
    assert gains.shape == (2, 3, 3)
    assert gains[0, 0, 1] > 0
    assert np.all(gains[:, :, [0, 2]] == 0)

    solved = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    assert deviation_gains(solved, desk).max() <= 1e-10
