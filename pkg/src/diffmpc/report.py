"""CSV export/import of backtest reports, the monthly summary table and SVG figures.

Per-arm files (``<name>`` is the arm name):

``arm_<name>_steps.csv``
    time, price, action, soc_before, soc_after, reward; one row per executed hour.
``arm_<name>_windows.csv``
    window, start_time, horizon, executed, anticipated, actual, realized,
    snap_distance; one row per replan epoch. ``actual`` is the whole window
    plan evaluated on true prices, ``realized`` covers the executed prefix.
``arm_<name>_forecasts.csv``
    window, time, true_price, point, q05, q25, q50, q75, q95, plan_action,
    plan_soc_before, plan_soc_after; the whole planned window, quantile cells
    empty for point forecasters.

``summary.csv`` has one row per UTC calendar month plus ``Sum`` and
``Average`` rows and one column per arm. Floats are written with ``repr`` so
every file re-parses to the exact values that produced it.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .backtest import QUANTILES, BacktestReport, StepRecord, WindowForecast, WindowRecord, anticipated_vs_actual
from .market_data import HOUR, format_time, parse_time
from .svg import Panel, SvgDocument

STEP_COLUMNS = ("time", "price", "action", "soc_before", "soc_after", "reward")
WINDOW_COLUMNS = ("window", "start_time", "horizon", "executed", "anticipated", "actual", "realized", "snap_distance")
FORECAST_COLUMNS = ("window", "time", "true_price", "point", "q05", "q25", "q50", "q75", "q95", "plan_action",
                    "plan_soc_before", "plan_soc_after")
ARM_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _num(x: float) -> str:
    return repr(float(x))


def write_report(report: BacktestReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / f"arm_{report.arm}_steps.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for s in report.steps:
            w.writerow([format_time(s.time), _num(s.price), _num(s.action), _num(s.soc_before),
                        _num(s.soc_after), _num(s.reward)])
    with (out / f"arm_{report.arm}_windows.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WINDOW_COLUMNS)
        for r in report.windows:
            w.writerow([r.index, format_time(r.start_time), r.horizon, r.executed, _num(r.anticipated),
                        _num(r.actual), _num(r.realized), _num(r.snap_distance)])
    with (out / f"arm_{report.arm}_forecasts.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_COLUMNS)
        for win, fc in zip(report.windows, report.forecasts):
            for j in range(win.horizon):
                quant = [_num(q) for q in fc.quantiles[:, j]] if fc.quantiles is not None else [""] * len(QUANTILES)
                w.writerow([win.index, format_time(win.start_time + j * HOUR), _num(fc.truth[j]),
                            _num(fc.point[j]), *quant, _num(fc.plan_actions[j]),
                            _num(fc.plan_soc[j]), _num(fc.plan_soc[j + 1])])


def _rows(path: Path) -> list[dict]:
    if not path.exists():
        raise FileNotFoundError(f"report file not found: {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_report(out_dir: str | Path, arm: str) -> BacktestReport:
    out = Path(out_dir)
    steps = [StepRecord(parse_time(r["time"]), float(r["price"]), float(r["action"]), float(r["soc_before"]),
                        float(r["soc_after"]), float(r["reward"]))
             for r in _rows(out / f"arm_{arm}_steps.csv")]
    windows = [WindowRecord(int(r["window"]), parse_time(r["start_time"]), int(r["horizon"]), int(r["executed"]),
                            float(r["anticipated"]), float(r["actual"]), float(r["realized"]),
                            float(r["snap_distance"]))
               for r in _rows(out / f"arm_{arm}_windows.csv")]
    grouped: dict[int, list[dict]] = {w.index: [] for w in windows}
    fpath = out / f"arm_{arm}_forecasts.csv"
    for r in _rows(fpath) if fpath.exists() else []:
        grouped[int(r["window"])].append(r)
    forecasts = []
    for w in windows:
        rows = grouped[w.index]
        if not rows and fpath.exists() and w.horizon:
            raise ValueError(f"{fpath}: no rows for window {w.index}")
        col = lambda name: np.array([float(r[name]) for r in rows])  # noqa: E731
        has_q = bool(rows) and rows[0]["q05"] != ""
        quant = np.stack([col(c) for c in ("q05", "q25", "q50", "q75", "q95")]) if has_q else None
        plan_soc = np.concatenate([col("plan_soc_before")[:1], col("plan_soc_after")])
        forecasts.append(WindowForecast(col("true_price"), col("point"), quant, col("plan_action"), plan_soc))
    return BacktestReport(arm, steps, windows, forecasts)


# --- summary table -------------------------------------------------------------

def summary_table(reports: list[BacktestReport]) -> tuple[list[str], list[str], list[list[float]]]:
    """Months x arms matrix of realized rewards with Sum and Average rows appended."""
    arms = [r.arm for r in reports]
    monthly = [r.monthly() for r in reports]
    months = sorted({m for mm in monthly for m in mm})
    body = [[mm.get(m, 0.0) for mm in monthly] for m in months]
    sums = [math.fsum(row[i] for row in body) for i in range(len(arms))]
    avgs = [s / len(months) if months else 0.0 for s in sums]
    return arms, months + ["Sum", "Average"], body + [sums, avgs]


def write_summary(reports: list[BacktestReport], out_dir: str | Path) -> None:
    out = Path(out_dir)
    arms, labels, rows = summary_table(reports)
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", *arms])
        for label, row in zip(labels, rows):
            w.writerow([label, *(_num(v) for v in row)])
    (out / "summary.txt").write_text(format_summary(arms, labels, rows))


def format_summary(arms, labels, rows) -> str:
    width = max(10, *(len(a) for a in arms))
    lines = ["Month".ljust(9) + "".join(a.rjust(width + 2) for a in arms)]
    for label, row in zip(labels, rows):
        if label == "Sum":
            lines.append("-" * len(lines[0]))
        lines.append(label.ljust(9) + "".join(f"{v:.2f}".rjust(width + 2) for v in row))
    return "\n".join(lines) + "\n"


def read_summary(path: str | Path) -> tuple[list[str], list[str], list[list[float]]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels, rows = [], []
        for rec in reader:
            labels.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    return header[1:], labels, rows


# --- figures -------------------------------------------------------------------

def plot_window(report: BacktestReport, k: int, path: str | Path) -> None:
    """Strategy figure for replan window ``k``: prices with forecast bands over SoC."""
    win, fc = report.windows[k], report.forecasts[k]
    hours = np.arange(win.horizon)
    doc = SvgDocument(720, 440, title=f"{report.arm} window {k}")
    lo = [fc.truth.min(initial=0.0), fc.point.min(initial=0.0)]
    hi = [fc.truth.max(initial=1.0), fc.point.max(initial=1.0)]
    if fc.quantiles is not None and win.horizon:
        lo.append(fc.quantiles.min())
        hi.append(fc.quantiles.max())
    top = Panel(doc, 60, 30, 620, 230, (0, max(win.horizon - 1, 1)), (min(lo), max(hi)))
    top.frame(ylabel=f"price, window {k} from {format_time(win.start_time)}")
    if fc.quantiles is not None and win.horizon:
        top.band(hours, fc.quantiles[0], fc.quantiles[4], fill="#bff0f5")
        top.band(hours, fc.quantiles[1], fc.quantiles[3], fill="#66d9e8")
    # executed prefix
    doc.rect(top.px(0), top.top, top.px(max(win.executed - 1, 0)) - top.px(0), top.height,
             fill="#f2f2f2", fill_opacity=0.5)
    top.series(hours, fc.point, stroke="#333333", stroke_dasharray="4,3")
    top.series(hours, fc.truth, stroke="black", stroke_width=1.5)
    for h, a, p in zip(hours, fc.plan_actions, fc.truth):
        color = "red" if a > 1e-12 else "green" if a < -1e-12 else "gray"
        top.dot(h, p, fill=color)
    bottom = Panel(doc, 60, 300, 620, 100, (0, max(win.horizon, 1)), (0.0, 1.0), pad_y=False)
    bottom.frame(ylabel="state of charge", xlabel="hour of window")
    bottom.series(np.arange(len(fc.plan_soc)), fc.plan_soc, stroke="blue", stroke_width=1.5)
    doc.save(path)


def plot_gaps(reports: list[BacktestReport], path: str | Path) -> None:
    """Anticipated (hollow) and actual (filled) window rewards, sorted by their gap."""
    pairs = {r.arm: anticipated_vs_actual(r) for r in reports if r.windows}
    values = [v for ps in pairs.values() for p in ps for v in p] or [0.0, 1.0]
    n = max((len(ps) for ps in pairs.values()), default=1)
    doc = SvgDocument(720, 420, title="anticipated vs actual window reward")
    panel = Panel(doc, 60, 30, 520, 340, (0, max(n - 1, 1)), (min(values), max(values)))
    panel.frame(ylabel="window reward", xlabel="windows sorted by |anticipated - actual|")
    for i, (arm, ps) in enumerate(pairs.items()):
        color = ARM_COLORS[i % len(ARM_COLORS)]
        xs = range(len(ps))
        panel.series(xs, [p[1] for p in ps], stroke=color)
        for x, (ant, act) in zip(xs, ps):
            panel.dot(x, ant, fill="white", stroke=color)
            panel.dot(x, act, fill=color)
        doc.rect(595, 40 + 18 * i, 10, 10, fill=color)
        doc.text(610, 49 + 18 * i, arm, size=10)
    doc.save(path)
