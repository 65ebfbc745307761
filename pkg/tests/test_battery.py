import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmpc.battery import BatterySpec, InfeasibleAction, action_bounds, reward, rollout, step_soc

specs = st.builds(
    BatterySpec,
    capacity_mwh=st.floats(0.1, 100),
    eta=st.floats(0.05, 1.0),
    a_max=st.floats(0.01, 1.0),
    deg_cost=st.floats(0, 50),
    deg_quad=st.floats(0, 50),
    efficiency_mode=st.sampled_from(["literal", "asymmetric"]),
)


def test_empty_battery_cannot_discharge():
    lo, hi = action_bounds(0.0, BatterySpec())
    assert lo == 0.0 and hi > 0


def test_bounds_example():
    lo, hi = action_bounds(0.09, BatterySpec(a_max=0.25, eta=0.9))
    assert lo == pytest.approx(-0.1, abs=1e-15)
    assert hi == 0.25


def test_full_battery_bounds():
    assert action_bounds(1.0, BatterySpec(eta=1.0, a_max=0.5)) == (-0.5, 0.0)


def test_step_soc_literal():
    assert step_soc(0.5, 0.2, BatterySpec(eta=0.9)) == pytest.approx(0.68, abs=1e-15)
    assert step_soc(0.5, 0.0, BatterySpec(eta=0.9)) == 0.5


def test_step_soc_asymmetric_discharge():
    spec = BatterySpec(eta=0.9, efficiency_mode="asymmetric")
    assert step_soc(0.5, -0.2, spec) == pytest.approx(0.5 - 0.2 / 0.9, abs=1e-15)


def test_step_soc_rejects_out_of_bounds():
    with pytest.raises(InfeasibleAction):
        step_soc(0.1, -0.5, BatterySpec(eta=0.9, a_max=1.0))


def test_reward_examples():
    spec = BatterySpec(capacity_mwh=10, deg_cost=2, deg_quad=0)
    assert reward(50, 0.0, spec) == 0
    assert reward(50, -0.2, spec) == pytest.approx(96.0)
    assert reward(50, 0.2, spec) == pytest.approx(-104.0)


def test_rollout_examples():
    spec = BatterySpec(capacity_mwh=1, eta=1, a_max=1, deg_cost=0)
    path, rewards, total = rollout(0.0, [1.0, -1.0], [10.0, 100.0], spec)
    assert rewards == [-10.0, 100.0]
    assert total == 90.0
    assert path == [0.0, 1.0, 0.0]

    path, rewards, total = rollout(0.3, [0.0] * 4, [5.0] * 4, BatterySpec())
    assert total == 0 and path == [0.3] * 5


def test_rollout_names_infeasible_step():
    spec = BatterySpec(eta=1.0, a_max=0.5)
    with pytest.raises(InfeasibleAction, match="step 1"):
        rollout(0.0, [0.5, 0.6], [1.0, 1.0], spec)


@settings(max_examples=300)
@given(spec=specs, soc=st.floats(0, 1), u=st.floats(0, 1))
def test_bounded_actions_keep_soc_in_range(spec, soc, u):
    lo, hi = action_bounds(soc, spec)
    assert lo <= 0 <= hi
    nxt = step_soc(soc, lo + u * (hi - lo), spec)
    assert 0.0 <= nxt <= 1.0


@given(spec=specs, price=st.floats(-500, 5000), a=st.floats(-1, 1))
def test_reward_is_odd_without_degradation(spec, price, a):
    spec = BatterySpec(spec.capacity_mwh, spec.eta, spec.a_max, 0.0, 0.0, spec.efficiency_mode)
    assert reward(price, a, spec) == -reward(price, -a, spec)


@given(spec=specs, soc=st.floats(0, 1), data=st.data())
def test_rollout_total_is_sum_of_rewards(spec, soc, data):
    actions, prices = [], []
    s = soc
    for _ in range(data.draw(st.integers(0, 6))):
        lo, hi = action_bounds(s, spec)
        a = data.draw(st.floats(lo, hi))
        actions.append(a)
        prices.append(data.draw(st.floats(-100, 300)))
        s = step_soc(s, a, spec)
    path, rewards, total = rollout(soc, actions, prices, spec)
    assert total == math.fsum(rewards)
    assert len(path) == len(actions) + 1


@given(soc=st.floats(0, 1), frac=st.floats(0, 1), buy=st.floats(0, 200), sell=st.floats(0, 200),
       eta=st.floats(0.5, 1.0), cap=st.floats(0.5, 20))
def test_literal_round_trip_is_lossless(soc, frac, buy, sell, eta, cap):
    spec = BatterySpec(capacity_mwh=cap, eta=eta, a_max=1.0, deg_cost=0.0)
    _, hi = action_bounds(soc, spec)
    a = frac * hi
    path, _, total = rollout(soc, [a, -a], [buy, sell], spec)
    assert path[-1] == pytest.approx(soc, abs=1e-12)
    assert total == pytest.approx(a * (sell - buy) * cap, abs=1e-9 * (1 + abs(total)))
