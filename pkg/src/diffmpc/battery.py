"""Battery energy storage environment: SoC dynamics, feasible actions and reward.

Actions are hourly energy flows as fractions of capacity; ``a > 0`` charges
(buys energy), ``a < 0`` discharges (sells).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SLACK = 1e-12
MODES = ("literal", "asymmetric")


class InfeasibleAction(ValueError):
    pass


@dataclass(frozen=True)
class BatterySpec:
    capacity_mwh: float = 1.0
    eta: float = 0.9
    a_max: float = 0.25
    deg_cost: float = 2.0
    deg_quad: float = 0.0
    efficiency_mode: str = "literal"

    def __post_init__(self):
        if not self.capacity_mwh > 0:
            raise ValueError("capacity_mwh must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if not 0.0 < self.a_max <= 1.0:
            raise ValueError("a_max must lie in (0, 1]")
        if self.deg_cost < 0 or self.deg_quad < 0:
            raise ValueError("degradation costs must be non-negative")
        if self.efficiency_mode not in MODES:
            raise ValueError(f"efficiency_mode must be one of {MODES}")


@dataclass(frozen=True)
class Observation:
    soc: float
    price: float


def _check_soc(soc: float) -> None:
    if not 0.0 <= soc <= 1.0:
        raise ValueError(f"state of charge {soc} outside [0, 1]")


def action_bounds(soc: float, spec: BatterySpec) -> tuple[float, float]:
    _check_soc(soc)
    if spec.efficiency_mode == "literal":
        lo = -min(spec.a_max, soc / spec.eta)
    else:
        lo = -min(spec.a_max, soc * spec.eta)
    hi = min(spec.a_max, (1.0 - soc) / spec.eta)
    return lo, hi


def soc_delta(a, spec: BatterySpec):
    """Change in SoC caused by action ``a`` (works elementwise on arrays)."""
    if spec.efficiency_mode == "literal":
        return spec.eta * a
    return np.where(a >= 0, spec.eta * a, a / spec.eta) if isinstance(a, np.ndarray) else (
        spec.eta * a if a >= 0 else a / spec.eta)


def action_for_delta(delta, spec: BatterySpec):
    """Inverse of :func:`soc_delta`: the action producing a given SoC change."""
    if spec.efficiency_mode == "literal":
        return delta / spec.eta
    return np.where(delta >= 0, delta / spec.eta, delta * spec.eta)


def step_soc(soc: float, a: float, spec: BatterySpec) -> float:
    lo, hi = action_bounds(soc, spec)
    if a < lo - SLACK or a > hi + SLACK:
        raise InfeasibleAction(f"action {a} outside [{lo}, {hi}] at soc {soc}")
    nxt = soc + soc_delta(a, spec)
    # the bound check limits any overshoot to SLACK / eta plus rounding
    return float(min(max(nxt, 0.0), 1.0))


def reward(price, a, spec: BatterySpec):
    """Revenue minus throughput degradation, in currency (elementwise on arrays)."""
    cap = spec.capacity_mwh
    return (-a * price - spec.deg_cost * np.abs(a) - spec.deg_quad * cap * a * a) * cap


def rollout(soc0: float, actions, prices, spec: BatterySpec):
    """Apply ``actions`` from ``soc0`` against ``prices``.

    Returns ``(soc_path, rewards, total)`` where ``soc_path`` has one more entry
    than ``actions`` and ``total`` is the correctly rounded sum of ``rewards``.
    """
    actions = [float(a) for a in actions]
    prices = [float(p) for p in prices]
    if len(actions) != len(prices):
        raise ValueError(f"{len(actions)} actions but {len(prices)} prices")
    soc = float(soc0)
    _check_soc(soc)
    path = [soc]
    rewards = []
    for k, (a, p) in enumerate(zip(actions, prices)):
        try:
            soc = step_soc(soc, a, spec)
        except InfeasibleAction as exc:
            raise InfeasibleAction(f"step {k}: {exc}") from None
        path.append(soc)
        rewards.append(float(reward(p, a, spec)))
    return path, rewards, math.fsum(rewards)
