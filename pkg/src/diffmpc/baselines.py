"""Point-forecast baselines: least-squares AR(p), seasonal naive and an RNN regressor."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .diffusion import ForecastError, TrainConfig, param_checksum
from .market_data import PriceSeries
from .recurrent import encode_batch, gru_cell, hidden_size, init_gru, window_stats

log = logging.getLogger(__name__)

RIDGE = 1e-8


def _values(series) -> np.ndarray:
    return np.asarray(series.values if isinstance(series, PriceSeries) else series, dtype=float)


@dataclass(frozen=True)
class ARModel:
    order: int
    coeffs: np.ndarray  # intercept first, then lag-1 .. lag-p weights
    fit_residual_std: float


def fit_ar(series, p: int = 24) -> ARModel:
    """Ordinary least squares on the lagged design via ridge-stabilized normal equations."""
    x = _values(series)
    if p < 1:
        raise ForecastError("AR order must be at least 1")
    if x.size < 2 * p + 1:
        raise ForecastError(f"AR({p}) needs at least {2 * p + 1} observations, got {x.size}")
    rows = x.size - p
    design = np.ones((rows, p + 1))
    for lag in range(1, p + 1):
        design[:, lag] = x[p - lag:x.size - lag]
    target = x[p:]
    gram = design.T @ design + RIDGE * np.eye(p + 1)
    try:
        coeffs = np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError as exc:
        raise ForecastError(f"AR normal equations are singular: {exc}") from None
    if not np.all(np.isfinite(coeffs)):
        raise ForecastError("AR normal equations are singular beyond ridge repair")
    resid = target - design @ coeffs
    return ARModel(p, coeffs, float(np.sqrt(np.mean(resid ** 2))))


def forecast_ar(model: ARModel, history, horizon: int) -> np.ndarray:
    hist = _values(history)
    p = model.order
    if hist.size < p:
        raise ForecastError(f"AR({p}) forecast needs {p} history values, got {hist.size}")
    lags = list(hist[-p:][::-1])  # most recent first
    out = np.empty(horizon)
    for k in range(horizon):
        nxt = model.coeffs[0] + float(np.dot(model.coeffs[1:], lags))
        out[k] = nxt
        lags = [nxt] + lags[:-1]
    return out


def seasonal_naive(history, season: int = 24, horizon: int = 24) -> np.ndarray:
    hist = _values(history)
    if hist.size < season:
        raise ForecastError(f"seasonal naive needs {season} history values, got {hist.size}")
    last = hist[-season:]
    return np.array([last[k % season] for k in range(horizon)])


@dataclass(frozen=True)
class RnnPointModel:
    params: dict
    config: TrainConfig
    loss_history: tuple = ()

    @property
    def context_len(self) -> int:
        return self.config.context_len

    @property
    def hidden_size(self) -> int:
        return hidden_size(self.params)

    def checksum(self) -> str:
        return param_checksum(self.params)


def _head(h, p):
    return h @ p["head_w"] + p["head_b"]


def train_rnn_point(series, cfg: TrainConfig = TrainConfig()) -> RnnPointModel:
    """Fit the shared recurrent cell plus a linear head on next-value MSE."""
    cfg.validate()
    values = _values(series)
    ctx = cfg.context_len
    if values.size < ctx + 1:
        raise ForecastError(f"series of length {values.size} shorter than context_len + 1 = {ctx + 1}")
    pred_len = min(cfg.pred_len, values.size - ctx)
    length = ctx + pred_len
    rng = np.random.default_rng(cfg.seed)
    params = init_gru(cfg.hidden_size, rng)
    params["head_w"] = rng.normal(0.0, 1.0 / math.sqrt(cfg.hidden_size), (cfg.hidden_size, 1))
    params["head_b"] = np.zeros(1)
    opt = ad.Adam(params, lr=cfg.learning_rate, clip=cfg.grad_clip)
    losses = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(cfg.batches_per_epoch):
            starts = rng.integers(0, values.size - length + 1, cfg.batch_size)
            windows = np.stack([values[s:s + length] for s in starts])
            center, scale = window_stats(windows[:, :ctx])
            scaled = (windows - center[:, None]) / scale[:, None]
            leaves = {k: ad.param(v) for k, v in params.items()}
            h = np.zeros((cfg.batch_size, cfg.hidden_size))
            states = []
            for j in range(length - 1):
                h = gru_cell(scaled[:, j:j + 1], h, leaves)
                if j >= ctx - 1:
                    states.append(h)
            pred = _head(ad.stack_rows(states), leaves)
            loss = ad.mse(pred, scaled[:, ctx:].T.reshape(-1, 1))
            if not np.isfinite(loss.value):
                raise ForecastError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            opt.step({k: leaf.grad for k, leaf in leaves.items()})
            epoch_losses.append(float(loss.value))
        losses.append(float(np.mean(epoch_losses)))
        log.debug("rnn-point epoch %d loss %.5f", epoch, losses[-1])
    for arr in params.values():
        arr.setflags(write=False)
    return RnnPointModel(params, cfg, tuple(losses))


def forecast_rnn_point(model: RnnPointModel, history, horizon: int) -> np.ndarray:
    """Deterministic autoregressive rollout of the one-step regressor."""
    hist = _values(history)
    ctx = model.context_len
    if hist.size < ctx:
        raise ForecastError(f"history of length {hist.size} shorter than context_len {ctx}")
    tail = hist[-ctx:][None, :]
    center, scale = window_stats(tail)
    h = encode_batch((tail - center[:, None]) / scale[:, None], model.params)
    out = np.empty(horizon)
    for k in range(horizon):
        z = _head(h, model.params)[0, 0]
        out[k] = z * scale[0] + center[0]
        h = gru_cell(np.array([[(out[k] - center[0]) / scale[0]]]), h, model.params)
    return out
