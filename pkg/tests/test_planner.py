import itertools

import numpy as np
import pytest

from diffmpc.battery import BatterySpec, rollout
from diffmpc.planner import PlannerConfig, PlanningError, brute_force_plan, perfect_plan, plan_dp, plan_smpc
from diffmpc.selftest import check_dp_oracle, random_instance

LOSSLESS = BatterySpec(capacity_mwh=1, eta=1, a_max=1, deg_cost=0)


def cfg(n, g=2, **kw):
    return PlannerConfig(horizon=max(n, 1), replan_interval=1, soc_grid=g, **kw)


def test_two_hour_arbitrage():
    plan = plan_dp([10.0, 100.0], 0.0, LOSSLESS, cfg(2))
    np.testing.assert_array_equal(plan.actions, [1.0, -1.0])
    assert plan.anticipated_reward == 90.0
    assert plan.value == 90.0
    np.testing.assert_array_equal(plan.soc_path, [0.0, 1.0, 0.0])


def test_constant_prices_from_empty_do_nothing():
    plan = plan_dp([30.0] * 12, 0.0, BatterySpec(deg_cost=1.0), cfg(12, 11))
    assert np.all(plan.actions == 0) and plan.anticipated_reward == 0


def test_stored_energy_is_sold_by_the_end():
    # no terminal value on SoC, so a charged battery empties when selling pays
    plan = plan_dp([30.0] * 12, 0.5, BatterySpec(deg_cost=1.0), cfg(12, 11))
    assert plan.soc_path[-1] == 0.0 and plan.anticipated_reward > 0


def test_decreasing_prices_from_empty_do_nothing():
    plan = plan_dp(np.linspace(100, 10, 10), 0.0, BatterySpec(deg_cost=0.0), cfg(10, 21))
    assert np.all(plan.actions == 0)


def test_plan_is_feasible_and_value_matches_rollout():
    rng = np.random.default_rng(3)
    prices = rng.uniform(0, 80, 30)
    spec = BatterySpec(eta=0.85, a_max=0.3, deg_cost=1.5, deg_quad=2.0, efficiency_mode="asymmetric")
    plan = plan_dp(prices, 0.4, spec, cfg(30, 31))
    path, _, total = rollout(plan.soc_path[0], plan.actions, prices, spec)
    np.testing.assert_allclose(path, plan.soc_path, atol=1e-12)
    assert total == pytest.approx(plan.value, abs=1e-9)


def test_soc0_snaps_to_nearest_level():
    plan = plan_dp([1.0, 2.0], 0.33, BatterySpec(), cfg(2, 11))
    assert plan.soc_path[0] == pytest.approx(0.3)
    assert plan.snap_distance == pytest.approx(0.03)


def test_bruteforce_single_step_is_best_transition():
    spec = BatterySpec(eta=1.0, a_max=0.5, deg_cost=0.0)
    plan = brute_force_plan([-5.0], 0.5, spec, cfg(1, 5))
    # negative price: charge as much as allowed
    np.testing.assert_allclose(plan.actions, [0.5])
    assert plan.value == pytest.approx(2.5)


def test_bruteforce_budget():
    with pytest.raises(PlanningError, match="budget"):
        brute_force_plan(np.ones(12), 0.0, BatterySpec(), cfg(12, 5))


def test_dp_matches_independent_enumeration():
    # enumerate SoC paths here without the planner's grid helper
    spec = BatterySpec(capacity_mwh=2.0, eta=0.8, a_max=0.5, deg_cost=1.0, deg_quad=0.5)
    prices = np.array([20.0, 5.0, 60.0, 30.0, 80.0])
    levels = np.linspace(0, 1, 5)
    best = -np.inf
    for tail in itertools.product(range(5), repeat=len(prices)):
        path = (2,) + tail
        socs = levels[list(path)]
        actions = np.diff(socs) / spec.eta
        lo = -np.minimum(spec.a_max, socs[:-1] / spec.eta)
        hi = np.minimum(spec.a_max, (1 - socs[:-1]) / spec.eta)
        if np.any(actions < lo - 1e-12) or np.any(actions > hi + 1e-12):
            continue
        cap = spec.capacity_mwh
        val = np.sum((-actions * prices - spec.deg_cost * np.abs(actions) - spec.deg_quad * cap * actions ** 2) * cap)
        best = max(best, val)
    plan = plan_dp(prices, 0.5, spec, cfg(5, 5))
    assert plan.value == pytest.approx(best, abs=1e-9)


def test_dp_equals_bruteforce_on_random_instances():
    check_dp_oracle(instances=60, seed=42)


def test_smpc_singleton_equals_dp():
    rng = np.random.default_rng(0)
    prices = rng.uniform(10, 90, 24)
    spec = BatterySpec(deg_quad=1.0)
    c = cfg(24, 21)
    a, b = plan_smpc(prices[None, :], 0.5, spec, c), plan_dp(prices, 0.5, spec, c)
    np.testing.assert_array_equal(a.actions, b.actions)
    assert a.value == b.value
    np.testing.assert_array_equal(a.value_table, b.value_table)


def test_smpc_mean_collapse_without_quadratic_cost():
    rng = np.random.default_rng(1)
    paths = rng.normal(40, 10, (17, 24))
    spec = BatterySpec(deg_quad=0.0)
    c = cfg(24, 26)
    sm, dp = plan_smpc(paths, 0.2, spec, c), plan_dp(paths.mean(axis=0), 0.2, spec, c)
    np.testing.assert_allclose(sm.value_table, dp.value_table, atol=1e-9)
    np.testing.assert_array_equal(sm.actions, dp.actions)


def test_smpc_duplicated_ensemble_gives_same_plan():
    rng = np.random.default_rng(2)
    paths = rng.normal(40, 10, (9, 24))
    spec = BatterySpec(deg_quad=3.0)
    c = cfg(24, 21)
    a, b = plan_smpc(paths, 0.5, spec, c), plan_smpc(np.vstack([paths, paths]), 0.5, spec, c)
    np.testing.assert_array_equal(a.actions, b.actions)


def test_smpc_anticipated_is_scenario_average():
    rng = np.random.default_rng(4)
    paths = rng.normal(40, 10, (5, 12))
    spec = BatterySpec()
    plan = plan_smpc(paths, 0.5, spec, cfg(12, 11))
    totals = [rollout(plan.soc_path[0], plan.actions, row, spec)[2] for row in paths]
    assert plan.anticipated_reward == pytest.approx(np.mean(totals), abs=1e-12)


def test_smpc_rejects_ragged_input():
    with pytest.raises(PlanningError):
        plan_smpc([[1.0, 2.0], [3.0]], 0.5, BatterySpec(), cfg(2))


def test_perfect_plan_reductions():
    assert perfect_plan([10.0, 100.0], 0.0, LOSSLESS, cfg(2)).anticipated_reward == 90.0
    empty = perfect_plan([], 0.5, BatterySpec(), cfg(1))
    assert len(empty) == 0 and empty.anticipated_reward == 0.0


def test_gamma_zero_is_greedy():
    rng = np.random.default_rng(5)
    for _ in range(20):
        prices, soc0, spec, c = random_instance(rng)
        from dataclasses import replace
        greedy = plan_dp(prices, soc0, spec, replace(c, gamma=0.0))
        single = brute_force_plan(prices[:1], soc0, spec, c)
        assert greedy.value == single.value
        assert greedy.actions[0] == single.actions[0]


@pytest.mark.parametrize("bad", [dict(soc_grid=1), dict(replan_interval=0), dict(replan_interval=80),
                                 dict(num_scenarios=0), dict(gamma=1.5), dict(aggregator="mode")])
def test_planner_config_validation(bad):
    with pytest.raises(PlanningError):
        PlannerConfig(**bad)


def test_smpc_collapse_holds_with_quadratic_cost():
    # the quadratic term does not involve the price, so stage rewards stay affine in price
    rng = np.random.default_rng(6)
    paths = rng.normal(40, 10, (11, 24))
    spec = BatterySpec(deg_quad=4.0)
    c = cfg(24, 26)
    sm, dp = plan_smpc(paths, 0.6, spec, c), plan_dp(paths.mean(axis=0), 0.6, spec, c)
    np.testing.assert_allclose(sm.value_table, dp.value_table, atol=1e-9)
    np.testing.assert_array_equal(sm.actions, dp.actions)


def test_default_grid_is_within_two_percent_of_fine_grid():
    from diffmpc.market_data import SynthConfig, synth_prices

    prices = synth_prices(SynthConfig(days=20)).values
    coarse = perfect_plan(prices, 0.5, BatterySpec(), PlannerConfig(soc_grid=51)).anticipated_reward
    fine = perfect_plan(prices, 0.5, BatterySpec(), PlannerConfig(soc_grid=501)).anticipated_reward
    assert coarse <= fine + 1e-9
    assert (fine - coarse) / fine < 0.02
