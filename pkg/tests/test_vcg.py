import numpy as np
import pytest

from infoauction.errors import ConfigurationError, DomainError
from infoauction.types.grid import TypeGrid, ValueGrid
from infoauction.types.profile import StrategyProfile
from infoauction.vcg import (
    allocate,
    expected_max,
    expected_second_highest,
    expost_payoff,
    interim_curve,
    opponent_mixture,
    second_highest_cdf,
)

GRID = ValueGrid(a=1.0, b=2.0, m=4)
ENDS = ValueGrid(a=1.0, b=2.0, m=2)


def test_allocate_examples():
    outcome = allocate([1.5, 1.25])
    assert outcome.win_prob.tolist() == [1.0, 0.0]
    assert outcome.expected_payments.tolist() == [1.25, 0.0]

    tie = allocate([1.5, 1.5])
    assert tie.win_prob.tolist() == [0.5, 0.5]
    assert tie.payments.tolist() == [1.5, 1.5]

    three = allocate([2.0, 1.0, 1.75])
    assert three.win_prob.tolist() == [1.0, 0.0, 0.0]
    assert three.expected_payments.tolist() == [1.75, 0.0, 0.0]


def test_allocate_conserves_the_object(rng):
    for _ in range(50):
        bids = rng.choice(GRID.points, size=int(rng.integers(1, 5)))
        outcome = allocate(bids)
        assert outcome.win_prob.sum() == pytest.approx(1.0)
        assert np.all(outcome.payments[outcome.win_prob == 0] == 0)


def test_allocate_empty():
    with pytest.raises(DomainError):
        allocate([])


def test_expost_payoff_examples():
    assert expost_payoff(0, 1.5, [1.5, 1.25]) == pytest.approx(0.25)
    assert expost_payoff(0, 1.5, [1.5, 1.5]) == 0.0
    assert expost_payoff(1, 1.75, [2.0, 1.75]) == 0.0


def _profile(types: TypeGrid, opponent_maps: list[np.ndarray], grid: ValueGrid) -> StrategyProfile:
    own = np.zeros((*types.shape, grid.size))
    own[..., 0] = 1.0
    return StrategyProfile(grid, types, np.stack([own, *opponent_maps]), constrained=False)


def test_opponent_mixture_examples():
    types = TypeGrid.build([1.0], [0.0, 1.0])
    point = np.zeros((1, 2, 5))
    point[..., 3] = 1.0
    g = opponent_mixture(_profile(types, [point], GRID), types, exclude=0)
    assert g.shape == (1, 5)
    assert g[0] == pytest.approx([0, 0, 0, 1, 0])

    ends = np.zeros((1, 2, 5))
    ends[0, 0, 0] = ends[0, 1, 4] = 1.0
    g = opponent_mixture(_profile(types, [ends], GRID), types, exclude=0)
    assert g[0] == pytest.approx([0.5, 0, 0, 0, 0.5])

    three = TypeGrid.build([1.0], [0.0, 0.5, 1.0], s_distribution="custom", s_weights=[0.25, 0.5, 0.25])
    maps = np.zeros((1, 3, 3))
    maps[0, 0, 0] = maps[0, 2, 2] = 1.0
    maps[0, 1] = [0.5, 0.0, 0.5]
    g = opponent_mixture(_profile(three, [maps], ENDS), three, exclude=0)
    assert g[0] == pytest.approx([0.5, 0.0, 0.5])


def test_opponent_mixture_incomplete():
    types = TypeGrid.build([1.0], [0.0, 1.0])
    holes = np.full((1, 2, 5), np.nan)
    with pytest.raises(ConfigurationError):
        opponent_mixture(_profile(types, [holes], GRID), types, exclude=0)


def test_interim_curve_examples():
    top = interim_curve(np.array([[0, 0, 0, 0, 1.0]]), GRID)
    assert top.pi == pytest.approx(np.zeros(5))

    coin = interim_curve(np.array([[0.5, 0.0, 0.5]]), ENDS)
    assert coin.pi[1] == pytest.approx(0.25)

    bottom = interim_curve(np.array([[1.0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0]]), GRID)
    assert bottom.pi[-1] == pytest.approx(1.0)
    assert list(bottom.to_frame().columns) == ["z", "pi", "opp_max_cdf"]


def test_interim_curve_properties(rng):
    for _ in range(30):
        mixtures = rng.dirichlet(np.ones(GRID.size), size=int(rng.integers(1, 4)))
        curve = interim_curve(mixtures, GRID)
        assert curve.pi[0] == 0.0
        assert np.all(np.diff(curve.pi) >= -1e-15)
        assert np.all(np.diff(curve.pi, n=2) >= -1e-12)


def test_truthful_bidding_is_optimal(rng):
    z = GRID.points
    for _ in range(20):
        mixtures = rng.dirichlet(np.ones(GRID.size), size=2)
        # exact expected payoff of bidding z_l with value z_k against two opponents, ties split
        joint = np.multiply.outer(mixtures[0], mixtures[1])
        for k in range(GRID.size):
            payoffs = []
            for bid in z:
                total = 0.0
                for (j1, j2), w in np.ndenumerate(joint):
                    bids = [bid, z[j1], z[j2]]
                    outcome = allocate(bids)
                    total += w * outcome.win_prob[0] * (z[k] - outcome.payments[0])
                payoffs.append(total)
            assert max(payoffs) <= payoffs[k] + 1e-12
            assert payoffs[k] == pytest.approx(interim_curve(mixtures, GRID).pi[k], abs=1e-12)


def test_order_statistics():
    coin = np.array([[0.5, 0.0, 0.5], [0.5, 0.0, 0.5]])
    assert expected_max(coin, ENDS) == pytest.approx(1.75)
    assert expected_second_highest(coin, ENDS) == pytest.approx(1.25)
    assert second_highest_cdf(coin)[-1] == pytest.approx(1.0)

    mixed = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    assert expected_max(mixed, ENDS) == pytest.approx(2.0)
    assert expected_second_highest(mixed, ENDS) == pytest.approx(1.5)
