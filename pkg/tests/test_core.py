import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from infoauction.errors import ConfigurationError, InfeasibilityError
from infoauction.types.cost import CostModel, CostVariant, cost
from infoauction.types.experiment import (
    Experiment,
    bracket,
    make_mean_constrained,
    mean_constrained_vertices,
)
from infoauction.types.grid import TypeGrid, ValueGrid
from infoauction.types.mechanism import AuditCurve
from infoauction.types.profile import StrategyProfile

from .conftest import make_config

GRID = ValueGrid(a=1.0, b=2.0, m=4)


def test_value_grid_points():
    assert GRID.points.tolist() == [1.0, 1.25, 1.5, 1.75, 2.0]
    assert GRID.size == 5
    assert GRID.step == pytest.approx(0.25)
    assert GRID.center(0.3) == pytest.approx(1.3)


@pytest.mark.parametrize(
    "kwargs",
    [{"a": 1.0, "b": 2.0, "m": 1}, {"a": 2.0, "b": 1.0, "m": 4}, {"a": 0.0, "b": 1.0, "m": 4}],
)
def test_value_grid_rejects_bad_bounds(kwargs):
    with pytest.raises(ValidationError):
        ValueGrid(**kwargs)


def test_type_grid_weights():
    uniform = TypeGrid.build([0.0, 0.5, 1.0], [0.0, 1.0])
    assert uniform.wr == pytest.approx([1 / 3] * 3)
    assert uniform.weights.shape == (3, 2)
    assert uniform.weights.sum() == pytest.approx(1.0)
    assert uniform.top_r_index == 2

    beta = TypeGrid.build([0.0, 0.25, 0.5, 0.75, 1.0], [0.0, 1.0], r_distribution="beta", r_beta=(2.0, 2.0))
    assert beta.wr.sum() == pytest.approx(1.0, abs=1e-12)
    assert beta.wr == pytest.approx(beta.wr[::-1])
    assert beta.wr[2] > beta.wr[0]


def test_type_grid_beta_weights_are_cdf_cell_masses():
    grid = TypeGrid.build([0.0, 1.0], [0.0, 0.5, 1.0], s_distribution="beta", s_beta=(2.0, 3.0))
    cells = np.diff(stats.beta.cdf([0.0, 0.25, 0.75, 1.0], 2.0, 3.0))
    assert grid.ws == pytest.approx(cells, abs=1e-12)
    # not the renormalized density at the points, which vanishes at both ends
    assert grid.ws[0] > 0 and grid.ws[2] > 0


def test_type_grid_rejections():
    with pytest.raises(ValidationError):
        TypeGrid.build([0.5, 0.0], [0.0, 1.0])
    with pytest.raises(ValidationError):
        TypeGrid.build([0.0, 1.0], [0.0, 1.0], r_distribution="custom", r_weights=[0.5, 0.4])
    with pytest.raises(ValueError):
        TypeGrid.build([0.0, 1.0], [0.0, 1.0], r_distribution="custom")


def test_cost_examples():
    model = CostModel(grid=GRID)
    assert cost(model, 0.5, 1.0, Experiment.point(GRID, 4)) == 0.0
    spread = Experiment(GRID, np.array([0.5, 0.0, 0.0, 0.0, 0.5]), 1.5)
    assert cost(model, 0.0, 0.3, spread) == 0.0
    assert cost(model, 1.0, 0.0, spread) == pytest.approx(0.5)


def test_cost_grid_mismatch():
    other = ValueGrid(a=1.0, b=3.0, m=4)
    with pytest.raises(ConfigurationError):
        cost(CostModel(grid=GRID), 1.0, 0.5, Experiment.point(other, 2))


def test_cost_axioms(rng):
    model = CostModel(grid=GRID, gamma=1.5)
    center = 1.5
    f = Experiment.point(GRID, 2)._replace(center=center)
    for _ in range(20):
        # mean-preserving spread of delta_1.5 onto a random bracketing pair
        lo, hi = int(rng.integers(0, 2)), int(rng.integers(3, 5))
        g = Experiment.from_support(GRID, lo, hi, center)
        assert cost(model, 1.0, 0.5, g) >= cost(model, 1.0, 0.5, f)
        assert cost(model, 1.0, 0.5, g) >= cost(model, 0.5, 0.5, g)

        lam = rng.random()
        mix = Experiment(GRID, lam * f.mass + (1 - lam) * g.mass, center)
        expected = lam * cost(model, 1.0, 0.5, f) + (1 - lam) * cost(model, 1.0, 0.5, g)
        assert cost(model, 1.0, 0.5, mix) == pytest.approx(expected)


def test_cost_at_center_variant():
    model = CostModel(grid=GRID, variant=CostVariant.ANCHOR_AT_CENTER)
    # a point mass has zero spread around its own mean
    assert cost(model, 1.0, 0.0, Experiment.point(GRID, 3)) == 0.0
    spread = Experiment(GRID, np.array([0.5, 0.0, 0.0, 0.0, 0.5]), 1.5)
    assert cost(model, 1.0, 0.0, spread) == pytest.approx(0.25)


def test_table_kernel():
    model = CostModel(grid=GRID, kernel="table", table_x=(0.0, 0.5, 1.0), table_y=(0.0, 0.1, 0.4))
    assert model.k(np.array([0.0, 0.25, 1.0, 1.5])) == pytest.approx([0.0, 0.05, 0.4, 0.7])
    with pytest.raises(ValidationError):
        CostModel(grid=GRID, kernel="table", table_x=(0.0, 0.5, 1.0), table_y=(0.0, 0.4, 0.5))


def test_make_mean_constrained_examples():
    assert make_mean_constrained(GRID, 0.5).mass.tolist() == [0, 0, 1, 0, 0]
    for shape in ("degenerate", "two-point extreme", "uniform"):
        assert make_mean_constrained(GRID, 0.0, shape).mass.tolist() == [1, 0, 0, 0, 0]
    assert make_mean_constrained(GRID, 0.5, "two-point extreme").mass == pytest.approx([0.5, 0, 0, 0, 0.5])
    assert make_mean_constrained(GRID, 0.5, "uniform").mass == pytest.approx([0.2] * 5)


def test_make_mean_constrained_off_grid():
    f = make_mean_constrained(GRID, 0.3)
    assert f.support == (1, 2)
    assert f.mass[1:3] == pytest.approx([0.8, 0.2])
    assert abs(f.mean - 1.3) <= 1e-9
    assert bracket(GRID, 1.3) == (1, 2)
    assert bracket(GRID, 1.5) == (2, 2)


def test_make_mean_constrained_infeasible():
    with pytest.raises(InfeasibilityError):
        make_mean_constrained(GRID, 1.2)
    with pytest.raises(InfeasibilityError):
        make_mean_constrained(GRID, 0.3, "uniform")


def test_vertices_meet_the_mean():
    vertices = mean_constrained_vertices(GRID, 0.5)
    supports = [v.support for v in vertices]
    assert supports == [(0, 3), (0, 4), (1, 3), (1, 4), (2,)]
    for v in vertices:
        v.validate(1e-9)
    assert [v.support for v in mean_constrained_vertices(GRID, 1.0)] == [(4,)]


def test_experiment_validate():
    with pytest.raises(ConfigurationError):
        Experiment(GRID, np.array([0.5, 0.5, 0, 0, 0]), 1.5).validate()
    Experiment(GRID, np.array([0.5, 0.5, 0, 0, 0]), 1.5).validate(constrained=False)
    with pytest.raises(ConfigurationError):
        Experiment(GRID, np.array([1.5, -0.5, 0, 0, 0]), 0.875).validate()
    frame = Experiment.point(GRID, 1).to_frame()
    assert list(frame.columns) == ["z", "mass"]


def test_mechanism_config_invariants():
    with pytest.raises(ValidationError, match="n ≥ 2"):
        make_config(n=1)
    with pytest.raises(ValidationError):
        make_config(punishment=(0.5,))
    with pytest.raises(ValidationError):
        make_config(n=3, punishment=(-1.0, -2.0))
    cfg = make_config(n=2, punishment=(-1.0, -2.0))
    assert cfg.penalty(1) == -2.0
    assert cfg.z_s.tolist() == [1.0, 1.5, 2.0]


def test_audit_curve():
    curve = AuditCurve(q=(0.0, 0.5, 1.0), cost=(0.0, 0.1, 0.4))
    assert curve(0.75) == pytest.approx(0.25)
    with pytest.raises(ValidationError):
        AuditCurve(q=(0.0, 1.0), cost=(0.2, 0.1))


def test_profile_round_trip_and_validation(desk, desk_map):
    profile = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    profile.validate(desk.mean_tol)
    assert profile.is_symmetric

    frame = profile.to_frame()
    assert list(frame.columns) == ["bidder", "r", "s", "z", "mass"]
    back = StrategyProfile.from_frame(frame, desk.value_grid, desk.type_grid)
    np.testing.assert_allclose(back.mass, profile.mass)

    with pytest.raises(ConfigurationError, match="without an assignment"):
        StrategyProfile.from_frame(frame.iloc[5:], desk.value_grid, desk.type_grid).validate(desk.mean_tol)

    broken = profile.mass.copy()
    broken[0, 0, 1] = [0, 1, 0, 0, 0]
    with pytest.raises(ConfigurationError, match="mean constraint"):
        profile._replace(mass=broken).validate(desk.mean_tol)
