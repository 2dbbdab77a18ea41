import numpy as np
import pandas as pd
import pytest

from infoauction.errors import ConfigurationError, DomainError
from infoauction.fees import chain_closure_fee, value_tables
from infoauction.potential import solve_equilibrium
from infoauction.simulator import QUANTITIES, Mechanism, analytic_summary, run_batch
from infoauction.types.profile import StrategyProfile
from infoauction.verifier import random_profile

from .conftest import make_config

DESK_FEES = [-1 / 18, 7 / 36, 4 / 9]


@pytest.fixture
def desk_mechanism(desk, desk_map) -> Mechanism:
    profile = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    return Mechanism.build(profile, DESK_FEES)


def test_mechanism_build_broadcasts_fees(desk, desk_map):
    profile = StrategyProfile.symmetric(desk.value_grid, desk.type_grid, desk_map, desk.n)
    for fees in (0.0, np.zeros(3), np.zeros((3, 3)), np.zeros((2, 3, 3))):
        assert Mechanism.build(profile, fees).fees.shape == (2, 3, 3)
    assert Mechanism.build(profile, DESK_FEES).fees[1, 2].tolist() == pytest.approx(DESK_FEES)
    with pytest.raises(ConfigurationError, match="do not fit"):
        Mechanism.build(profile, np.zeros(4))


def test_analytic_summary_desk(desk, desk_mechanism):
    summary = analytic_summary(desk_mechanism, desk)
    assert summary.revenue == pytest.approx(535 / 324)
    assert summary.welfare == pytest.approx(563 / 324)
    assert summary.rents == pytest.approx(28 / 324)
    assert summary.payment == pytest.approx(409 / 324)
    assert summary.fees == pytest.approx(7 / 18)
    assert summary.info_cost == pytest.approx(0.0)
    assert summary.rents_by_bidder == pytest.approx([14 / 324, 14 / 324])
    assert summary.to_dict()["rents_by_bidder"] == pytest.approx([14 / 324, 14 / 324])


def test_analytic_summary_zero_cost(zero_cost):
    eq = solve_equilibrium(zero_cost)
    tau = chain_closure_fee(value_tables(eq.profile, zero_cost), zero_cost)
    assert tau.fees == pytest.approx([0.0, 0.25, 0.5])
    summary = analytic_summary(Mechanism.build(eq.profile, tau.fees), zero_cost)
    assert summary.revenue == pytest.approx(1.75)
    assert summary.rents == pytest.approx(0.0, abs=1e-9)


def test_top_cost_scale_pays_its_whole_value():
    cfg = make_config(r=(1.0,))
    eq = solve_equilibrium(cfg)
    table = value_tables(eq.profile, cfg)
    summary = analytic_summary(Mechanism.build(eq.profile, table.phi[0]), cfg)
    assert summary.rents == pytest.approx(0.0, abs=1e-9)
    assert summary.revenue == pytest.approx(summary.welfare, abs=1e-9)


def test_decomposition_holds_on_random_mechanisms(rng):
    cfg = make_config(n=3)
    for _ in range(50):
        profile = random_profile(cfg, rng)
        fees = rng.uniform(-0.5, 0.5, size=(cfg.n, *cfg.type_grid.shape))
        summary = analytic_summary(Mechanism.build(profile, fees), cfg)
        assert summary.welfare == pytest.approx(summary.revenue + summary.rents, abs=1e-9)
        assert summary.surplus >= summary.payment


def test_run_batch_without_uncertainty(single_type):
    eq = solve_equilibrium(single_type)
    batch = run_batch(Mechanism.build(eq.profile, 0.0), single_type, n_runs=50, seed=3, retain=True)
    assert batch.mean["revenue"] == 2.0
    assert batch.mean["payment"] == 2.0
    assert all(value == 0.0 for value in batch.se.values())
    assert set(batch.mean) == set(QUANTITIES)
    assert {"r_0", "s_1", "t_0", "fee_1", "winner"} <= set(batch.records.columns)
    assert batch.records["t_0"].eq(2.0).all()


def test_run_batch_agrees_with_analytic(desk, desk_mechanism):
    exact = analytic_summary(desk_mechanism, desk)
    batch = run_batch(desk_mechanism, desk, n_runs=4000, seed=11)
    for quantity in ("revenue", "welfare", "rents", "payment", "fees"):
        assert abs(batch.mean[quantity] - getattr(exact, quantity)) <= 4 * batch.se[quantity] + 1e-12
    assert batch.records is None
    assert batch.to_dict()["n_runs"] == 4000


@pytest.mark.slow
def test_large_batch_within_three_standard_errors(desk, desk_mechanism):
    exact = analytic_summary(desk_mechanism, desk)
    batch = run_batch(desk_mechanism, desk, n_runs=100_000, seed=2024, workers=4)
    for quantity in ("revenue", "welfare"):
        assert abs(batch.mean[quantity] - getattr(exact, quantity)) <= 3 * batch.se[quantity]
    assert batch.se["revenue"] < 0.005


def test_run_batch_per_run_identity(desk, desk_mechanism):
    batch = run_batch(desk_mechanism, desk, n_runs=300, seed=5, retain=True)
    records = batch.records
    np.testing.assert_allclose(records["welfare"], records["revenue"] + records["rents"], atol=1e-12)
    assert records["run"].tolist() == list(range(300))


def test_run_batch_is_deterministic(desk, desk_mechanism):
    first = run_batch(desk_mechanism, desk, n_runs=500, seed=42, retain=True)
    again = run_batch(desk_mechanism, desk, n_runs=500, seed=42, retain=True)
    threaded = run_batch(desk_mechanism, desk, n_runs=500, seed=42, workers=3, chunk_size=37, retain=True)
    other = run_batch(desk_mechanism, desk, n_runs=500, seed=43)

    pd.testing.assert_frame_equal(first.records, again.records)
    pd.testing.assert_frame_equal(first.records, threaded.records)
    assert first.mean == threaded.mean
    assert first.mean != other.mean


def test_run_batch_rejects_empty_batches(desk, desk_mechanism):
    with pytest.raises(DomainError, match="n_runs must be positive"):
        run_batch(desk_mechanism, desk, n_runs=0, seed=1)
