"""Model files: one ``.npz`` container per model with a JSON metadata record.

Arrays are stored as float64 ``.npy`` members, so a save/load round trip is
bit-exact. The ``kind`` tag selects the model class on load.
"""
from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .baselines import ARModel, RnnPointModel
from .diffusion import DiffusionSchedule, TimeGradModel, TrainConfig

FORMAT_VERSION = 1


def _train_config(data: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in data.items() if k in known})


def save_model(model, path: str | Path) -> Path:
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    if isinstance(model, TimeGradModel):
        meta = {"kind": "timegrad", "config": asdict(model.config), "loss_history": list(model.loss_history)}
        arrays.update({f"param/{k}": v for k, v in model.params.items()})
        arrays["schedule/betas"] = model.schedule.betas
        arrays["schedule/alphas"] = model.schedule.alphas
        arrays["schedule/alpha_bars"] = model.schedule.alpha_bars
    elif isinstance(model, RnnPointModel):
        meta = {"kind": "rnn_point", "config": asdict(model.config), "loss_history": list(model.loss_history)}
        arrays.update({f"param/{k}": v for k, v in model.params.items()})
    elif isinstance(model, ARModel):
        meta = {"kind": "ar", "order": model.order, "fit_residual_std": model.fit_residual_std}
        arrays["param/coeffs"] = model.coeffs
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    meta["format_version"] = FORMAT_VERSION
    arrays = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_model(path: str | Path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        arrays = {k: data[k].copy() for k in data.files if k != "meta"}
    for arr in arrays.values():
        arr.setflags(write=False)
    params = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("param/")}
    kind = meta["kind"]
    if kind == "timegrad":
        cfg = _train_config(meta["config"])
        sched = DiffusionSchedule(cfg.T, arrays["schedule/betas"], arrays["schedule/alphas"],
                                  arrays["schedule/alpha_bars"])
        return TimeGradModel(params, sched, cfg, tuple(meta["loss_history"]))
    if kind == "rnn_point":
        return RnnPointModel(params, _train_config(meta["config"]), tuple(meta["loss_history"]))
    if kind == "ar":
        return ARModel(meta["order"], params["coeffs"], meta["fit_residual_std"])
    raise ValueError(f"{path}: unknown model kind {kind!r}")
