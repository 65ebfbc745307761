"""Grid dynamic programming for MPC and Monte-Carlo SMPC, plus an exhaustive oracle.

The state of charge is confined to ``G`` evenly spaced levels on [0, 1]. A
transition between levels is admitted when the action that produces it lies
inside :func:`~diffmpc.battery.action_bounds` of the source level. Ties in the
Bellman maximization go to the smallest ``|a|``, then to the lower target
level, which makes every optimal plan unique.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .battery import SLACK, BatterySpec, action_bounds, action_for_delta, reward

TIE_BREAKS = ("canonical", "reversed")


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 72
    replan_interval: int = 24
    soc_grid: int = 51
    num_scenarios: int = 100
    aggregator: str = "median"
    gamma: float = 1.0

    def __post_init__(self):
        if self.soc_grid < 2:
            raise PlanningError("soc_grid must be at least 2")
        if not 1 <= self.replan_interval <= self.horizon:
            raise PlanningError("need 1 <= replan_interval <= horizon")
        if self.num_scenarios < 1:
            raise PlanningError("num_scenarios must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise PlanningError("gamma must lie in [0, 1]")
        if self.aggregator not in ("median", "mean"):
            raise PlanningError("aggregator must be 'median' or 'mean'")


@dataclass(frozen=True)
class ActionPlan:
    actions: np.ndarray
    soc_path: np.ndarray
    value: float  # optimized (possibly discounted) objective
    anticipated_reward: float  # undiscounted reward under the planning prices
    snap_distance: float = 0.0
    value_table: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class SocGrid:
    levels: np.ndarray
    actions: np.ndarray  # (G, G) action taking level i to level j
    feasible: np.ndarray  # (G, G) bool

    def snap(self, soc: float) -> tuple[int, float]:
        if not 0.0 <= soc <= 1.0:
            raise PlanningError(f"state of charge {soc} outside [0, 1]")
        idx = int(np.argmin(np.abs(self.levels - soc)))
        return idx, abs(float(self.levels[idx]) - soc)


def soc_grid(spec: BatterySpec, levels: int) -> SocGrid:
    grid = np.linspace(0.0, 1.0, levels)
    acts = action_for_delta(grid[None, :] - grid[:, None], spec)
    bounds = np.array([action_bounds(float(s), spec) for s in grid])
    feasible = (acts >= bounds[:, :1] - SLACK) & (acts <= bounds[:, 1:] + SLACK)
    return SocGrid(grid, acts, feasible)


def _choose(q: np.ndarray, abs_a: np.ndarray, tie_break: str) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise argmax of ``q`` with the deterministic tie-break."""
    best = q.max(axis=1)
    cand = q == best[:, None]
    if tie_break == "canonical":
        mag = np.where(cand, abs_a, np.inf)
        cand &= mag == mag.min(axis=1, keepdims=True)
        choice = np.argmax(cand, axis=1)
    else:
        # test hook: largest |a| first, then the higher level
        mag = np.where(cand, abs_a, -np.inf)
        cand &= mag == mag.max(axis=1, keepdims=True)
        choice = q.shape[1] - 1 - np.argmax(cand[:, ::-1], axis=1)
    return best, choice


def _solve(stage_rewards, grid: SocGrid, soc0: float, gamma: float, tie_break: str):
    """Backward induction over precomputed stage reward matrices (N, G, G)."""
    if tie_break not in TIE_BREAKS:
        raise PlanningError(f"unknown tie_break {tie_break!r}")
    n = stage_rewards.shape[0]
    size = grid.levels.size
    abs_a = np.abs(grid.actions)
    values = np.zeros((n + 1, size))
    policy = np.zeros((n, size), dtype=int)
    for k in range(n - 1, -1, -1):
        weight = gamma ** k
        q = weight * stage_rewards[k] + values[k + 1][None, :]
        q = np.where(grid.feasible, q, -np.inf)
        values[k], policy[k] = _choose(q, abs_a, tie_break)
    idx, snap = grid.snap(soc0)
    path = [idx]
    for k in range(n):
        path.append(int(policy[k, path[-1]]))
    actions = np.array([grid.actions[i, j] for i, j in zip(path, path[1:])])
    return actions, grid.levels[path], float(values[0, idx]), snap, values


def _validate_prices(prices) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1:
        raise PlanningError("prices must be one-dimensional")
    if not np.all(np.isfinite(prices)):
        raise PlanningError("prices must be finite")
    return prices


def plan_dp(prices, soc0: float, spec: BatterySpec, cfg: PlannerConfig = PlannerConfig(),
            tie_break: str = "canonical") -> ActionPlan:
    """Optimal grid plan against a single price trajectory."""
    prices = _validate_prices(prices)
    grid = soc_grid(spec, cfg.soc_grid)
    stage = np.stack([reward(p, grid.actions, spec) for p in prices]) if prices.size else np.zeros((0,) + grid.actions.shape)
    actions, socs, value, snap, table = _solve(stage, grid, soc0, cfg.gamma, tie_break)
    anticipated = math.fsum(float(reward(p, a, spec)) for p, a in zip(prices, actions))
    return ActionPlan(actions, socs, value, anticipated, snap, table)


def plan_smpc(paths, soc0: float, spec: BatterySpec, cfg: PlannerConfig = PlannerConfig(),
              tie_break: str = "canonical") -> ActionPlan:
    """One open-loop plan maximizing the scenario-average cumulative reward.

    The SoC path is shared by all scenarios, so the objective decomposes into
    stage rewards averaged over scenarios.
    """
    try:
        paths = np.asarray(getattr(paths, "paths", paths), dtype=float)
    except ValueError:
        raise PlanningError("ensemble paths must all have the same length") from None
    if paths.ndim != 2 or paths.shape[0] < 1:
        raise PlanningError("ensemble must be a non-empty (M, N) matrix with equal-length paths")
    if not np.all(np.isfinite(paths)):
        raise PlanningError("ensemble prices must be finite")
    grid = soc_grid(spec, cfg.soc_grid)
    num, horizon = paths.shape
    stage = np.empty((horizon,) + grid.actions.shape)
    for k in range(horizon):
        per_scenario = reward(paths[:, k][:, None, None], grid.actions[None], spec)
        stage[k] = per_scenario.sum(axis=0) / num
    actions, socs, value, snap, table = _solve(stage, grid, soc0, cfg.gamma, tie_break)
    totals = [math.fsum(float(reward(p, a, spec)) for p, a in zip(row, actions)) for row in paths]
    return ActionPlan(actions, socs, value, math.fsum(totals) / num, snap, table)


def brute_force_plan(prices, soc0: float, spec: BatterySpec, cfg: PlannerConfig = PlannerConfig(),
                     budget: int = 10**6) -> ActionPlan:
    """Enumerate every grid path; the reference the DP is checked against.

    Path values are accumulated back to front, matching the DP's summation
    order so that equal optima compare equal bit for bit.
    """
    prices = _validate_prices(prices)
    size = cfg.soc_grid
    n = prices.size
    if size ** n > budget:
        raise PlanningError(f"{size}^{n} paths exceed the enumeration budget {budget}")
    grid = soc_grid(spec, size)
    start, snap = grid.snap(soc0)
    best_value, best_key, best_path = -math.inf, None, None
    for tail in itertools.product(range(size), repeat=n):
        path = (start,) + tail
        if not all(grid.feasible[i, j] for i, j in zip(path, path[1:])):
            continue
        total = 0.0
        for k in range(n - 1, -1, -1):
            i, j = path[k], path[k + 1]
            total = cfg.gamma ** k * float(reward(prices[k], grid.actions[i, j], spec)) + total
        key = tuple(itertools.chain.from_iterable(
            (abs(grid.actions[i, j]), j) for i, j in zip(path, path[1:])))
        if total > best_value or (total == best_value and key < best_key):
            best_value, best_key, best_path = total, key, path
    actions = np.array([grid.actions[i, j] for i, j in zip(best_path, best_path[1:])])
    anticipated = math.fsum(float(reward(p, a, spec)) for p, a in zip(prices, actions))
    value = best_value if n else 0.0
    return ActionPlan(actions, grid.levels[list(best_path)], value, anticipated, snap)


def perfect_plan(prices, soc0: float, spec: BatterySpec, cfg: PlannerConfig = PlannerConfig()) -> ActionPlan:
    """Single-shot plan over a whole segment with the true prices known."""
    return plan_dp(prices, soc0, spec, cfg)
