"""Run configuration: an INI file with one section per component.

Example::

    [data]
    source = synth            ; or csv
    # path = prices.csv       ; csv only, relative to this file
    # timestamp_column = timestamp
    # price_column = price_usd_per_mwh
    # fill_gaps = false

    [synth]                   ; SynthConfig fields
    days = 153
    seed = 0

    [split]                   ; ISO-8601 UTC; train uses [start, train_end)
    train_end = 2021-04-01T00:00:00Z
    eval_start = 2021-04-01T00:00:00Z
    eval_end = 2021-05-31T00:00:00Z

    [battery]                 ; BatterySpec fields plus the initial SoC
    soc0 = 0.5

    [planner]                 ; PlannerConfig fields
    [timegrad]                ; TrainConfig fields for the diffusion model
    [rnn]                     ; TrainConfig fields for the RNN point model
    [ar]
    order = 24

    [run]
    arms = perfect, oracle, diffusion-mpc, diffusion-smpc, ar-mpc, seasonal-mpc, rnn-mpc
    output_dir = out
    model_dir = models
    seed = 0
    plot_arm = diffusion-mpc

Unknown sections or keys are rejected so that typos do not silently fall back
to defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .battery import BatterySpec
from .diffusion import TrainConfig
from .market_data import PriceSeries, SynthConfig, load_price_csv, parse_time, synth_prices
from .planner import PlannerConfig

ARMS = ("perfect", "oracle", "diffusion-mpc", "diffusion-smpc", "ar-mpc", "seasonal-mpc", "rnn-mpc")
SECTIONS = ("data", "synth", "split", "battery", "planner", "timegrad", "rnn", "ar", "run")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    path: Path
    source: str = "synth"
    csv_path: Path | None = None
    timestamp_column: str = "timestamp"
    price_column: str = "price_usd_per_mwh"
    fill_gaps: bool = False
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_end: str = ""
    eval_start: str = ""
    eval_end: str = ""
    battery: BatterySpec = field(default_factory=BatterySpec)
    soc0: float = 0.5
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    timegrad: TrainConfig = field(default_factory=TrainConfig)
    rnn: TrainConfig = field(default_factory=TrainConfig)
    ar_order: int = 24
    arms: tuple[str, ...] = ARMS
    output_dir: Path = Path("out")
    model_dir: Path = Path("models")
    seed: int = 0
    plot_arm: str = ""

    def load_series(self) -> PriceSeries:
        if self.source == "csv":
            return load_price_csv(self.csv_path, self.timestamp_column, self.price_column, self.fill_gaps)
        return synth_prices(self.synth)

    def split_indices(self, series: PriceSeries) -> tuple[int, int, int]:
        """Hour offsets (train_end, eval_start, eval_end) checked against ``series``."""
        idx = [series.index_of(parse_time(v)) for v in (self.train_end, self.eval_start, self.eval_end)]
        train_end, eval_start, eval_end = idx
        if not 0 < train_end <= eval_start < eval_end <= len(series):
            raise ConfigError(f"split points must satisfy 0 < train_end <= eval_start < eval_end <= {len(series)}; "
                              f"got hours {idx}")
        need = max(self.timegrad.context_len, self.rnn.context_len) + 1
        if train_end < need and any(a in self.arms for a in ("diffusion-mpc", "diffusion-smpc", "rnn-mpc")):
            raise ConfigError(f"training segment of {train_end} hours shorter than context + 1 = {need}")
        if len(series) - eval_start < self.planner.horizon:
            raise ConfigError("evaluation span shorter than one planning horizon")
        return train_end, eval_start, eval_end


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {kind.__name__}") from None


def _build(cls, section: str, items: dict, extra: tuple = ()):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kinds = {"int": int, "float": float, "str": str, "bool": bool}
    kwargs = {}
    for key, raw in items.items():
        if key in extra:
            continue
        if key not in types:
            raise ConfigError(f"[{section}] unknown key {key!r} (allowed: {', '.join(sorted(types) + list(extra))})")
        kwargs[key] = _coerce(section, key, raw, kinds[str(types[key])])
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _check_keys(section: str, items: dict, allowed: tuple) -> None:
    for key in items:
        if key not in allowed:
            raise ConfigError(f"[{section}] unknown key {key!r} (allowed: {', '.join(allowed)})")


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    """Parse a run config; ``seed`` overrides ``[run] seed``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (TrainConfig.T)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{name}]")
    sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in SECTIONS}
    base = path.parent
    cfg = RunConfig(path=path)

    _check_keys("data", sec["data"], ("source", "path", "timestamp_column", "price_column", "fill_gaps"))
    cfg.source = sec["data"].get("source", "synth").strip()
    if cfg.source not in ("synth", "csv"):
        raise ConfigError(f"[data] source must be 'synth' or 'csv', got {cfg.source!r}")
    if cfg.source == "csv":
        if "path" not in sec["data"]:
            raise ConfigError("[data] path is required when source = csv")
        cfg.csv_path = base / sec["data"]["path"].strip()
    cfg.timestamp_column = sec["data"].get("timestamp_column", cfg.timestamp_column).strip()
    cfg.price_column = sec["data"].get("price_column", cfg.price_column).strip()
    if "fill_gaps" in sec["data"]:
        cfg.fill_gaps = _coerce("data", "fill_gaps", sec["data"]["fill_gaps"], bool)

    cfg.synth = _build(SynthConfig, "synth", sec["synth"])
    _check_keys("split", sec["split"], ("train_end", "eval_start", "eval_end"))
    for key in ("train_end", "eval_start", "eval_end"):
        if key not in sec["split"]:
            raise ConfigError(f"[split] {key} is required")
        try:
            parse_time(sec["split"][key])
        except ValueError:
            raise ConfigError(f"[split] {key} = {sec['split'][key]!r}: expected an ISO-8601 timestamp") from None
        setattr(cfg, key, sec["split"][key].strip())

    battery = dict(sec["battery"])
    if "soc0" in battery:
        cfg.soc0 = _coerce("battery", "soc0", battery["soc0"], float)
    cfg.battery = _build(BatterySpec, "battery", battery, extra=("soc0",))
    if not 0.0 <= cfg.soc0 <= 1.0:
        raise ConfigError("[battery] soc0 must lie in [0, 1]")
    cfg.planner = _build(PlannerConfig, "planner", sec["planner"])

    _check_keys("run", sec["run"], ("arms", "output_dir", "model_dir", "seed", "plot_arm"))
    run = sec["run"]
    if "seed" in run:
        cfg.seed = _coerce("run", "seed", run["seed"], int)
    if seed is not None:
        cfg.seed = seed
    for name in ("timegrad", "rnn"):
        items = dict(sec[name])
        items.setdefault("seed", str(cfg.seed))
        train = _build(TrainConfig, name, items)
        try:
            train.validate()
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
        setattr(cfg, name, train)
    _check_keys("ar", sec["ar"], ("order",))
    cfg.ar_order = _coerce("ar", "order", sec["ar"].get("order", "24"), int)

    if "arms" in run:
        arms = tuple(a.strip() for a in run["arms"].split(",") if a.strip())
        for a in arms:
            if a not in ARMS:
                raise ConfigError(f"[run] unknown arm {a!r} (allowed: {', '.join(ARMS)})")
        if not arms:
            raise ConfigError("[run] arms must name at least one arm")
        cfg.arms = arms
    cfg.output_dir = base / run.get("output_dir", "out").strip()
    cfg.model_dir = base / run.get("model_dir", "models").strip()
    cfg.plot_arm = run.get("plot_arm", "").strip()
    return cfg
