"""Small-instance oracle equivalences and invariants, runnable without any data."""
from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from .backtest import ORACLE, audit_report, backtest, perfect_backtest
from .battery import BatterySpec, action_bounds, reward, rollout, step_soc
from .diffusion import TrainConfig, forward_sample, init_params, loss_and_grad, make_schedule
from .market_data import SynthConfig, synth_prices
from .planner import PlannerConfig, brute_force_plan, plan_dp, plan_smpc


def random_spec(rng: np.random.Generator, quad: bool = True) -> BatterySpec:
    return BatterySpec(
        capacity_mwh=float(rng.choice([1.0, 2.5, 10.0])),
        eta=float(rng.choice([1.0, 0.9, rng.uniform(0.5, 1.0)])),
        a_max=float(rng.choice([1.0, 0.5, rng.uniform(0.1, 1.0)])),
        deg_cost=float(rng.choice([0.0, 1.0, rng.uniform(0, 5)])),
        deg_quad=float(rng.choice([0.0, rng.uniform(0, 3)])) if quad else 0.0,
        efficiency_mode=str(rng.choice(["literal", "asymmetric"])),
    )


def random_instance(rng: np.random.Generator):
    """A small planning problem; half use integer prices so exact ties occur."""
    n = int(rng.integers(1, 7))
    g = int(rng.integers(2, 6))
    if rng.random() < 0.5:
        prices = rng.integers(-2, 6, n).astype(float)
    else:
        prices = rng.uniform(-20, 100, n)
    spec = random_spec(rng)
    soc0 = float(rng.choice([0.0, 1.0, rng.uniform()]))
    return prices, soc0, spec, PlannerConfig(horizon=max(n, 1), replan_interval=1, soc_grid=g)


def check_dp_oracle(instances: int = 200, seed: int = 0, tie_break: str = "canonical") -> str:
    rng = np.random.default_rng(seed)
    for i in range(instances):
        prices, soc0, spec, cfg = random_instance(rng)
        dp = plan_dp(prices, soc0, spec, cfg, tie_break=tie_break)
        bf = brute_force_plan(prices, soc0, spec, cfg)
        if dp.value != bf.value or not np.array_equal(dp.actions, bf.actions):
            raise AssertionError(f"instance {i}: dp {dp.value} {dp.actions} vs brute force {bf.value} {bf.actions}")
    return f"{instances} instances agree"


def check_smpc_collapse(ensembles: int = 50, seed: int = 1) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(ensembles):
        m, n = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        paths = rng.normal(40, 15, (m, n))
        spec = random_spec(rng, quad=False)
        cfg = PlannerConfig(horizon=n, replan_interval=1, soc_grid=int(rng.integers(2, 21)))
        soc0 = float(rng.uniform())
        sm = plan_smpc(paths, soc0, spec, cfg)
        dp = plan_dp(paths.mean(axis=0), soc0, spec, cfg)
        diff = float(np.max(np.abs(sm.value_table - dp.value_table)))
        worst = max(worst, diff)
        if diff > 1e-9 or not np.array_equal(sm.actions, dp.actions):
            raise AssertionError(f"ensemble {i}: table gap {diff}, actions equal {np.array_equal(sm.actions, dp.actions)}")
    return f"{ensembles} ensembles, max table gap {worst:.2e}"


def check_schedule(seed: int = 2) -> str:
    sched = make_schedule(50, 1e-4, 0.1)
    running = 1.0
    for t in range(sched.T):
        running *= sched.alphas[t]
        if abs(sched.alpha_bars[t] - running) > 1e-12 * running:
            raise AssertionError(f"alpha_bar mismatch at step {t + 1}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in (1, sched.T // 2, sched.T):
        draws = forward_sample(0.7, t, rng.standard_normal(10_000), sched)
        target = 1.0 - sched.alpha_bars[t - 1]
        rel = abs(draws.var() - target) / target
        worst = max(worst, rel)
        if rel > 0.05:
            raise AssertionError(f"marginal variance at t={t} off by {rel:.3f}")
    return f"product identity exact, worst marginal variance error {worst:.3f}"


def check_env_safety(cases: int = 10_000, seed: int = 3) -> str:
    rng = np.random.default_rng(seed)
    for i in range(cases):
        spec = random_spec(rng)
        soc = float(rng.choice([0.0, 1.0, rng.uniform()]))
        lo, hi = action_bounds(soc, spec)
        a = float(rng.choice([lo, hi, rng.uniform(lo, hi)]))
        nxt = step_soc(soc, a, spec)
        if not 0.0 <= nxt <= 1.0:
            raise AssertionError(f"case {i}: soc {soc} + action {a} -> {nxt}")
    return f"{cases} bounded actions keep SoC in [0, 1]"


def check_reward_identities(seed: int = 4) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(500):
        spec = replace(random_spec(rng), deg_cost=0.0, deg_quad=0.0, efficiency_mode="literal")
        p, a = rng.uniform(-50, 200), rng.uniform(-1, 1)
        if reward(p, a, spec) != -reward(p, -a, spec):
            raise AssertionError("reward not odd in the action without degradation")
        soc = rng.uniform(0, 1)
        lo, hi = action_bounds(soc, spec)
        amt = rng.uniform(0, min(hi, spec.a_max))
        buy, sell = rng.uniform(0, 100, 2)
        path, rewards, total = rollout(soc, [amt, -amt], [buy, sell], spec)
        if abs(path[-1] - soc) > 1e-12 or abs(total - amt * (sell - buy) * spec.capacity_mwh) > 1e-9:
            raise AssertionError("literal round trip identity violated")
    return "odd symmetry and literal round trip hold"


def gradient_check(coords: int = 100, seed: int = 5, step: float = 1e-5) -> float:
    """Worst relative error between autodiff and central differences on a tiny model."""
    cfg = TrainConfig(hidden_size=4, T=4, width=16, context_len=6, pred_len=3, beta_max=0.3)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, rng)
    sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    scaled = rng.standard_normal((3, cfg.context_len + cfg.pred_len))
    t = rng.integers(1, cfg.T + 1, 3 * cfg.pred_len)
    eps = rng.standard_normal(3 * cfg.pred_len)
    _, grads = loss_and_grad(params, scaled, cfg.context_len, t, eps, sched)
    names = sorted(params)
    gru = [n for n in names if n.startswith("gru")]
    den = [n for n in names if not n.startswith("gru")]
    worst = 0.0
    for i in range(coords):
        name = str(rng.choice(gru if i % 2 else den))
        idx = tuple(int(rng.integers(0, s)) for s in params[name].shape)
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += step
        minus[name][idx] -= step
        fd = (loss_and_grad(plus, scaled, cfg.context_len, t, eps, sched)[0]
              - loss_and_grad(minus, scaled, cfg.context_len, t, eps, sched)[0]) / (2 * step)
        an = grads[name][idx]
        worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
    return worst


def check_gradients() -> str:
    worst = gradient_check()
    if worst > 1e-4:
        raise AssertionError(f"worst relative gradient error {worst:.2e}")
    return f"worst relative error {worst:.2e} over 100 coordinates"


def check_backtest_invariants(seed: int = 6) -> str:
    series = synth_prices(SynthConfig(days=12, seed=seed))
    spec = BatterySpec()
    cfg = PlannerConfig(horizon=48, replan_interval=24, soc_grid=21)
    start, end = 48, 10 * 24
    perfect = perfect_backtest(series, 0.5, spec, cfg, start, end)
    oracle = backtest(series, ORACLE, "mpc", 0.5, spec, cfg, eval_start=start, eval_end=end)
    if not perfect.total >= oracle.total:
        raise AssertionError(f"perfect {perfect.total} below oracle {oracle.total}")
    problems = audit_report(oracle, spec) + audit_report(perfect, spec)
    if problems:
        raise AssertionError(problems[0])
    full = PlannerConfig(horizon=end - start, replan_interval=end - start, soc_grid=21)
    single = backtest(series.slice(0, end), ORACLE, "mpc", 0.5, spec, full, eval_start=start, eval_end=end)
    if single.total != perfect.total or any(w.anticipated != w.actual for w in single.windows):
        raise AssertionError("single-window oracle does not reproduce the perfect plan")
    return f"perfect {perfect.total:.2f} >= oracle {oracle.total:.2f}, audits clean"


def check_discounting(instances: int = 50, seed: int = 7) -> str:
    rng = np.random.default_rng(seed)
    for i in range(instances):
        prices, soc0, spec, cfg = random_instance(rng)
        for gamma in (0.0, float(rng.uniform()), 1.0):
            c = replace(cfg, gamma=gamma)
            dp, bf = plan_dp(prices, soc0, spec, c), brute_force_plan(prices, soc0, spec, c)
            if dp.value != bf.value or not np.array_equal(dp.actions, bf.actions):
                raise AssertionError(f"instance {i}, gamma {gamma}: dp and brute force disagree")
        first = plan_dp(prices, soc0, spec, replace(cfg, gamma=0.0))
        best_first = brute_force_plan(prices[:1], soc0, spec, cfg).value
        if first.value != best_first:
            raise AssertionError(f"instance {i}: gamma=0 value {first.value} is not the best first-stage reward")
    return f"{instances} instances at gamma in {{0, u, 1}}"


def properties(corrupt_tiebreak: bool = False) -> list[tuple[str, Callable[[], str]]]:
    tie = "reversed" if corrupt_tiebreak else "canonical"
    return [
        ("dp-vs-brute-force", lambda: check_dp_oracle(tie_break=tie)),
        ("smpc-linear-collapse", check_smpc_collapse),
        ("schedule-identities", check_schedule),
        ("environment-safety", check_env_safety),
        ("reward-identities", check_reward_identities),
        ("gradient-check", check_gradients),
        ("backtest-invariants", check_backtest_invariants),
        ("discounting", check_discounting),
    ]


def run_selftest(corrupt_tiebreak: bool = False) -> list[tuple[str, bool, str]]:
    results = []
    for name, check in properties(corrupt_tiebreak):
        try:
            results.append((name, True, check()))
        except AssertionError as exc:
            results.append((name, False, str(exc)))
    return results
