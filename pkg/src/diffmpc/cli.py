"""Command line entry point: ``diffmpc {train,backtest,plot,selftest} --config run.ini``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .backtest import ORACLE, EnsembleForecaster, PointForecaster, backtest, perfect_backtest
from .baselines import fit_ar, forecast_ar, forecast_rnn_point, seasonal_naive, train_rnn_point
from .config import ConfigError, RunConfig, load_config
from .diffusion import train_timegrad
from .persist import load_model, save_model
from .report import plot_gaps, plot_window, read_report, read_summary, write_report, write_summary

log = logging.getLogger("diffmpc")

MODEL_FILES = {"timegrad": "timegrad.npz", "rnn_point": "rnn_point.npz", "ar": "ar.npz"}
ARM_MODELS = {"diffusion-mpc": "timegrad", "diffusion-smpc": "timegrad", "rnn-mpc": "rnn_point", "ar-mpc": "ar"}


def _needed_models(cfg: RunConfig) -> list[str]:
    return sorted({ARM_MODELS[a] for a in cfg.arms if a in ARM_MODELS})


def cmd_train(cfg: RunConfig) -> dict[str, Path]:
    series = cfg.load_series()
    train_end, _, _ = cfg.split_indices(series)
    train = series.values[:train_end]
    written = {}
    for kind in _needed_models(cfg):
        if kind == "timegrad":
            model = train_timegrad(train, cfg.timegrad)
            summary = f"loss {model.loss_history[0]:.4f} -> {model.loss_history[-1]:.4f} over {len(model.loss_history)} epochs"
        elif kind == "rnn_point":
            model = train_rnn_point(train, cfg.rnn)
            summary = f"loss {model.loss_history[0]:.4f} -> {model.loss_history[-1]:.4f} over {len(model.loss_history)} epochs"
        else:
            model = fit_ar(train, cfg.ar_order)
            summary = f"order {model.order}, residual std {model.fit_residual_std:.4f}"
        path = save_model(model, cfg.model_dir / MODEL_FILES[kind])
        print(f"{kind}: {summary} -> {path}")
        written[kind] = path
    return written


def _forecasters(cfg: RunConfig) -> dict:
    models = {kind: load_model(cfg.model_dir / MODEL_FILES[kind]) for kind in _needed_models(cfg)}
    out = {"oracle": ORACLE, "seasonal": PointForecaster(lambda h, n: seasonal_naive(h, 24, n), 24)}
    if "timegrad" in models:
        out["diffusion"] = EnsembleForecaster(models["timegrad"], cfg.planner.num_scenarios)
    if "rnn_point" in models:
        rnn = models["rnn_point"]
        out["rnn"] = PointForecaster(lambda h, n: forecast_rnn_point(rnn, h, n), rnn.context_len)
    if "ar" in models:
        ar = models["ar"]
        out["ar"] = PointForecaster(lambda h, n: forecast_ar(ar, h, n), ar.order)
    return out


ARM_SETUP = {
    "oracle": ("oracle", "mpc"),
    "diffusion-mpc": ("diffusion", "mpc"),
    "diffusion-smpc": ("diffusion", "smpc"),
    "ar-mpc": ("ar", "mpc"),
    "seasonal-mpc": ("seasonal", "mpc"),
    "rnn-mpc": ("rnn", "mpc"),
}


def run_arms(cfg: RunConfig):
    series = cfg.load_series()
    _, eval_start, eval_end = cfg.split_indices(series)
    forecasters = _forecasters(cfg)
    reports = []
    for arm in cfg.arms:
        if arm == "perfect":
            rep = perfect_backtest(series, cfg.soc0, cfg.battery, cfg.planner, eval_start, eval_end)
        else:
            source, kind = ARM_SETUP[arm]
            rep = backtest(series, forecasters[source], kind, cfg.soc0, cfg.battery, cfg.planner,
                           seed=cfg.seed, eval_start=eval_start, eval_end=eval_end, arm=arm)
        log.info("%s: realized %.2f", arm, rep.total)
        reports.append(rep)
    return reports


def cmd_backtest(cfg: RunConfig):
    reports = run_arms(cfg)
    for rep in reports:
        write_report(rep, cfg.output_dir)
    write_summary(reports, cfg.output_dir)
    print((cfg.output_dir / "summary.txt").read_text(), end="")
    return reports


def cmd_plot(report_dir: Path, plot_arm: str = "") -> list[Path]:
    summary = report_dir / "summary.csv"
    if not summary.exists():
        raise FileNotFoundError(f"no summary.csv in {report_dir}; run backtest first")
    arms, _, _ = read_summary(summary)
    reports = {arm: read_report(report_dir, arm) for arm in arms}
    if not plot_arm:
        plot_arm = next((a for a in ("diffusion-mpc", "diffusion-smpc") if a in reports), arms[0])
    if plot_arm not in reports:
        raise ValueError(f"plot arm {plot_arm!r} not among report arms {arms}")
    written = []
    for k in range(len(reports[plot_arm].windows)):
        path = report_dir / f"window_{k}.svg"
        plot_window(reports[plot_arm], k, path)
        written.append(path)
    gaps = report_dir / "gaps.svg"
    plot_gaps([r for a, r in reports.items() if a != "perfect"] or list(reports.values()), gaps)
    written.append(gaps)
    print(f"wrote {len(written)} SVG files to {report_dir}")
    return written


def cmd_selftest(corrupt_tiebreak: bool = False) -> int:
    from .selftest import run_selftest

    failed = 0
    for name, ok, detail in run_selftest(corrupt_tiebreak):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    print(f"{failed} failed" if failed else "all properties pass")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffmpc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "backtest", "plot", "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "selftest")
        p.add_argument("--seed", type=int, default=None)
        if name == "plot":
            p.add_argument("--arm", default="")
        if name == "selftest":
            p.add_argument("--corrupt-tiebreak", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return cmd_selftest(args.corrupt_tiebreak)
        cfg = load_config(args.config, seed=args.seed)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "backtest":
            cmd_backtest(cfg)
        else:
            cmd_plot(cfg.output_dir, args.arm or cfg.plot_arm)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
