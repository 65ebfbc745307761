"""Receding-horizon backtest: forecast, plan, execute a prefix against true prices, repeat."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable

import numpy as np

from .battery import SLACK, BatterySpec, action_bounds, rollout
from .diffusion import ForecastEnsemble, TimeGradModel, aggregate_point, derive_seed, sample_ensemble
from .market_data import PriceSeries
from .planner import ActionPlan, PlannerConfig, PlanningError, perfect_plan, plan_dp, plan_smpc

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class BacktestError(RuntimeError):
    pass


class OracleForecaster:
    """Uses the realized prices as the forecast."""

    kind = "oracle"
    min_history = 0


@dataclass
class PointForecaster:
    fn: Callable[[np.ndarray, int], np.ndarray]
    min_history: int
    kind = "point"

    def point(self, history, horizon, seed):
        return np.asarray(self.fn(history, horizon), dtype=float)


@dataclass
class EnsembleForecaster:
    """Diffusion sampler; ensembles are cached per (history length, horizon, seed)."""

    model: TimeGradModel
    num_paths: int
    kind = "ensemble"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def min_history(self) -> int:
        return self.model.context_len

    def ensemble(self, history, horizon, seed) -> ForecastEnsemble:
        key = (len(history), horizon, seed)
        if key not in self._cache:
            self._cache[key] = sample_ensemble(self.model, history, horizon, self.num_paths, seed)
        return self._cache[key]


ORACLE = OracleForecaster()


@dataclass(frozen=True)
class StepRecord:
    time: datetime
    price: float
    action: float
    soc_before: float
    soc_after: float
    reward: float


@dataclass(frozen=True)
class WindowRecord:
    index: int
    start_time: datetime
    horizon: int
    executed: int
    anticipated: float
    actual: float  # full window plan evaluated on true prices
    realized: float  # executed prefix only
    snap_distance: float


@dataclass
class WindowForecast:
    """Plot material for one replan window."""

    truth: np.ndarray
    point: np.ndarray
    quantiles: np.ndarray | None  # (len(QUANTILES), horizon)
    plan_actions: np.ndarray
    plan_soc: np.ndarray


@dataclass
class BacktestReport:
    arm: str
    steps: list[StepRecord]
    windows: list[WindowRecord]
    forecasts: list[WindowForecast] = field(default_factory=list, repr=False)

    @property
    def total(self) -> float:
        return math.fsum(s.reward for s in self.steps)

    def monthly(self) -> "OrderedDict[str, float]":
        buckets: OrderedDict[str, list[float]] = OrderedDict()
        for s in self.steps:
            buckets.setdefault(s.time.strftime("%Y-%m"), []).append(s.reward)
        return OrderedDict((m, math.fsum(v)) for m, v in buckets.items())


def _forecast(forecaster, planner_kind, history, truth, horizon, seed, cfg):
    """Return (prices or ensemble for the planner, point, quantiles)."""
    if forecaster.kind == "oracle":
        return truth, truth, None
    if forecaster.kind == "point":
        point = forecaster.point(history, horizon, seed)
        if point.shape != (horizon,) or not np.all(np.isfinite(point)):
            raise BacktestError(f"point forecast has shape {point.shape} or non-finite values")
        return (point[None, :] if planner_kind == "smpc" else point), point, None
    ens = forecaster.ensemble(history, horizon, seed)
    point = aggregate_point(ens, cfg.aggregator)
    quant = ens.quantiles(QUANTILES) if horizon else np.zeros((len(QUANTILES), 0))
    return (ens.paths if planner_kind == "smpc" else point), point, quant


def backtest(series: PriceSeries, forecaster, planner_kind: str, soc0: float, spec: BatterySpec,
             cfg: PlannerConfig = PlannerConfig(), seed: int = 0, eval_start: int | None = None,
             eval_end: int | None = None, arm: str | None = None) -> BacktestReport:
    """Replan every ``cfg.replan_interval`` hours over ``[eval_start, eval_end)``.

    Each epoch plans over ``min(cfg.horizon, hours of data left)`` hours using
    only prices before the epoch as history, executes the first
    ``replan_interval`` actions against the true prices and carries the SoC.
    """
    if planner_kind not in ("mpc", "smpc"):
        raise BacktestError(f"unknown planner kind {planner_kind!r}")
    values = series.values
    eval_start = forecaster.min_history if eval_start is None else eval_start
    eval_end = len(values) if eval_end is None else eval_end
    if eval_start < forecaster.min_history:
        raise BacktestError(f"evaluation starts at hour {eval_start}, forecaster needs {forecaster.min_history} of history")
    if not eval_start < eval_end <= len(values):
        raise BacktestError(f"bad evaluation span [{eval_start}, {eval_end}) for series of length {len(values)}")
    if len(values) - eval_start < cfg.horizon:
        raise BacktestError(f"series too short: {len(values) - eval_start} hours after evaluation start, horizon {cfg.horizon}")

    planner = plan_smpc if planner_kind == "smpc" else plan_dp
    steps, windows, forecasts = [], [], []
    soc = float(soc0)
    k0, epoch = eval_start, 0
    while k0 < eval_end:
        horizon = min(cfg.horizon, len(values) - k0)
        truth = values[k0:k0 + horizon]
        try:
            model_input, point, quant = _forecast(forecaster, planner_kind, values[:k0], truth, horizon,
                                                  derive_seed(seed, k0), cfg)
            plan: ActionPlan = planner(model_input, soc, spec, cfg)
        except (ValueError, RuntimeError, PlanningError) as exc:
            raise BacktestError(f"epoch {epoch} (hour {k0}): {exc}") from exc
        start_soc = float(plan.soc_path[0])
        _, _, actual = rollout(start_soc, plan.actions, truth, spec)
        executed = min(cfg.replan_interval, eval_end - k0)
        socs, rewards, realized = rollout(start_soc, plan.actions[:executed], truth[:executed], spec)
        for j in range(executed):
            steps.append(StepRecord(series.time_at(k0 + j), float(truth[j]), float(plan.actions[j]),
                                    socs[j], socs[j + 1], rewards[j]))
        windows.append(WindowRecord(epoch, series.time_at(k0), horizon, executed,
                                    plan.anticipated_reward, actual, realized, plan.snap_distance))
        forecasts.append(WindowForecast(truth.copy(), np.asarray(point, dtype=float), quant,
                                        plan.actions, plan.soc_path))
        soc = socs[-1]
        k0 += executed
        epoch += 1
    return BacktestReport(arm or f"{forecaster.kind}-{planner_kind}", steps, windows, forecasts)


def perfect_backtest(series: PriceSeries, soc0: float, spec: BatterySpec, cfg: PlannerConfig = PlannerConfig(),
                     eval_start: int = 0, eval_end: int | None = None, arm: str = "perfect") -> BacktestReport:
    """The full-knowledge benchmark packaged as a one-window report."""
    eval_end = len(series) if eval_end is None else eval_end
    truth = series.values[eval_start:eval_end]
    plan = perfect_plan(truth, soc0, spec, cfg)
    start_soc = float(plan.soc_path[0])
    socs, rewards, total = rollout(start_soc, plan.actions, truth, spec)
    steps = [StepRecord(series.time_at(eval_start + j), float(truth[j]), float(plan.actions[j]),
                        socs[j], socs[j + 1], rewards[j]) for j in range(len(truth))]
    window = WindowRecord(0, series.time_at(eval_start), len(truth), len(truth),
                          plan.anticipated_reward, total, total, plan.snap_distance)
    return BacktestReport(arm, steps, [window],
                          [WindowForecast(truth.copy(), truth.copy(), None, plan.actions, plan.soc_path)])


def anticipated_vs_actual(report: BacktestReport) -> list[tuple[float, float]]:
    """Window (anticipated, actual) pairs, closest match first."""
    if not report.windows:
        raise BacktestError("report has no replan windows")
    pairs = [(w.anticipated, w.actual) for w in report.windows]
    return sorted(pairs, key=lambda p: (abs(p[0] - p[1]), p[0], p[1]))


def audit_report(report: BacktestReport, spec: BatterySpec) -> list[str]:
    """Feasibility violations in a report; empty when every step is admissible."""
    problems = []
    for k, s in enumerate(report.steps):
        if not (0.0 <= s.soc_before <= 1.0 and 0.0 <= s.soc_after <= 1.0):
            problems.append(f"step {k}: SoC outside [0, 1]")
            continue
        lo, hi = action_bounds(s.soc_before, spec)
        if not lo - SLACK <= s.action <= hi + SLACK:
            problems.append(f"step {k}: action {s.action} outside [{lo}, {hi}]")
        if k and abs(report.steps[k - 1].soc_after - s.soc_before) > 1e-9:
            problems.append(f"step {k}: SoC discontinuity")
    return problems
