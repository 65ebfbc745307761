"""Toy TimeGrad: a recurrent encoder conditioning a one-dimensional DDPM.

The recurrent state summarizes the (standardized) price history; the denoiser
predicts the injected noise for the next value given that state, and sampling
runs the full reverse chain once per future hour, feeding each drawn value
back through the recurrent cell.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .market_data import PriceSeries
from .recurrent import encode_batch, gru_cell, hidden_size, init_gru, window_stats

log = logging.getLogger(__name__)

EMBED_SIZE = 16


class ForecastError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear variance schedule. Arrays are 0-based: entry ``t - 1`` is step ``t``."""

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ForecastError(f"diffusion step {t} outside 1..{self.T}")


def make_schedule(T: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    if T < 1:
        raise ForecastError("T must be at least 1")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ForecastError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, T) if T > 1 else np.array([beta_min])
    alphas = 1.0 - betas
    alpha_bars = np.empty(T)
    running = 1.0
    for i, a in enumerate(alphas):
        running = running * a
        alpha_bars[i] = running
    for arr in (betas, alphas, alpha_bars):
        arr.setflags(write=False)
    return DiffusionSchedule(T, betas, alphas, alpha_bars)


def forward_sample(x0, t: int, eps, sched: DiffusionSchedule):
    """Closed-form marginal of the noising chain after ``t`` steps."""
    sched.check_step(t)
    ab = sched.alpha_bars[t - 1]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def step_embedding(t, size: int = EMBED_SIZE) -> np.ndarray:
    """Sinusoidal embedding of integer steps, shape (len(t), size)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = size // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 2e-3
    hidden_size: int = 32
    T: int = 50
    beta_min: float = 1e-4
    beta_max: float = 0.1
    context_len: int = 72
    seed: int = 0
    batches_per_epoch: int = 25
    pred_len: int = 24
    width: int = 64
    grad_clip: float = 5.0

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "hidden_size", "T", "context_len",
                     "batches_per_epoch", "pred_len", "width"):
            if getattr(self, name) < 1:
                raise ForecastError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ForecastError("learning_rate must be positive")
        if self.context_len < 2:
            raise ForecastError("context_len must be at least 2 for the scaler")
        if not 0.0 < self.beta_min <= self.beta_max < 1.0:
            raise ForecastError("need 0 < beta_min <= beta_max < 1")


@dataclass(frozen=True)
class TimeGradModel:
    params: dict
    schedule: DiffusionSchedule
    config: TrainConfig
    loss_history: tuple = ()

    @property
    def context_len(self) -> int:
        return self.config.context_len

    @property
    def hidden_size(self) -> int:
        return hidden_size(self.params)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")

    def checksum(self) -> str:
        return param_checksum(self.params)


@dataclass(frozen=True)
class ForecastEnsemble:
    paths: np.ndarray  # (M, N) prices

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[0] < 1:
            raise ForecastError("ensemble needs a (M >= 1, N) matrix of paths")
        if not np.all(np.isfinite(paths)):
            raise ForecastError("ensemble contains non-finite prices")
        object.__setattr__(self, "paths", paths)

    @property
    def num_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def horizon(self) -> int:
        return self.paths.shape[1]

    def quantiles(self, qs) -> np.ndarray:
        """Pointwise empirical quantiles, shape (len(qs), N)."""
        return np.quantile(self.paths, qs, axis=0)


def param_checksum(params: dict) -> str:
    digest = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        digest.update(name.encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def init_params(cfg: TrainConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = init_gru(cfg.hidden_size, rng)
    fan_in = 1 + EMBED_SIZE + cfg.hidden_size
    for name, (n_in, n_out) in {
        "den_w1": (fan_in, cfg.width),
        "den_w2": (cfg.width, cfg.width),
        "den_w3": (cfg.width, 1),
    }.items():
        params[name] = rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, n_out))
    params["den_b1"] = np.zeros(cfg.width)
    params["den_b2"] = np.zeros(cfg.width)
    params["den_b3"] = np.zeros(1)
    return params


def denoiser(x_t, emb, h, p):
    """Predicted noise for a batch: inputs (B, 1), (B, EMBED_SIZE), (B, H)."""
    inp = ad.concat([x_t, emb, h], axis=1)
    a1 = ad.silu(inp @ p["den_w1"] + p["den_b1"])
    a2 = ad.silu(a1 @ p["den_w2"] + p["den_b2"])
    return a2 @ p["den_w3"] + p["den_b3"]


# --- single-value operations -------------------------------------------------

def rnn_step(x: float, h_prev, params: dict) -> np.ndarray:
    """Advance the recurrent state by one scaled observation."""
    h_prev = np.asarray(h_prev, dtype=float)
    hidden = hidden_size(params)
    if h_prev.shape != (hidden,):
        raise ForecastError(f"state has shape {h_prev.shape}, expected ({hidden},)")
    out = gru_cell(np.array([[float(x)]]), h_prev[None, :], params)
    return out[0]


def encode_history(history, params: dict) -> np.ndarray:
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        raise ForecastError("cannot encode an empty history")
    return encode_batch(history[None, :], params)[0]


def denoise_step(x_t, t: int, h, model: TimeGradModel, eps_draw, predict=None):
    """One reverse step. ``predict`` overrides the learned noise predictor."""
    sched = model.schedule
    sched.check_step(t)
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float)).reshape(-1, 1)
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if predict is None:
        emb = np.repeat(step_embedding([t]), x_t.shape[0], axis=0)
        eps_hat = denoiser(x_t, emb, h, model.params)
    else:
        eps_hat = np.asarray(predict(x_t, t, h), dtype=float).reshape(-1, 1)
    return _reverse_update(x_t, t, eps_hat, sched, np.asarray(eps_draw, dtype=float).reshape(-1, 1))


def _reverse_update(x_t, t, eps_hat, sched, eps_draw):
    alpha = sched.alphas[t - 1]
    beta = sched.betas[t - 1]
    mean = (x_t - (beta / math.sqrt(1.0 - sched.alpha_bars[t - 1])) * eps_hat) / math.sqrt(alpha)
    if t == 1:
        return mean
    return mean + math.sqrt(beta) * eps_draw


# --- training ----------------------------------------------------------------

def _training_loss(params, scaled, ctx, t, eps, sched, emb_table):
    """Noise-prediction MSE over every target position of a batch of windows.

    ``scaled`` is (B, L); targets are positions ctx..L-1, each conditioned on
    the state after consuming all earlier positions. ``t`` and ``eps`` are
    flattened position-major, shape (P*B,).
    """
    batch, length = scaled.shape
    h = np.zeros((batch, hidden_size(params)))
    states = []
    for j in range(length - 1):
        h = gru_cell(scaled[:, j:j + 1], h, params)
        if j >= ctx - 1:
            states.append(h)
    cond = ad.stack_rows(states)
    x0 = scaled[:, ctx:].T.reshape(-1, 1)
    ab = sched.alpha_bars[t - 1][:, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps[:, None]
    pred = denoiser(x_t, emb_table[t], cond, params)
    return ad.mse(pred, eps[:, None])


def loss_and_grad(params: dict, scaled: np.ndarray, ctx: int, t: np.ndarray, eps: np.ndarray,
                  sched: DiffusionSchedule) -> tuple[float, dict]:
    """Training loss on a fixed batch and its gradient with respect to every parameter."""
    emb_table = step_embedding(np.arange(sched.T + 1))
    leaves = {k: ad.param(v) for k, v in params.items()}
    loss = _training_loss(leaves, scaled, ctx, t, eps, sched, emb_table)
    loss.backward()
    grads = {k: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for k, leaf in leaves.items()}
    return float(loss.value), grads


def _sample_windows(values, starts, length, ctx):
    windows = np.stack([values[s:s + length] for s in starts])
    center, scale = window_stats(windows[:, :ctx])
    return (windows - center[:, None]) / scale[:, None]


def train_timegrad(series: PriceSeries, cfg: TrainConfig = TrainConfig()) -> TimeGradModel:
    """Jointly fit the recurrent encoder and the denoiser by minibatch Adam."""
    cfg.validate()
    values = np.asarray(series.values if isinstance(series, PriceSeries) else series, dtype=float)
    ctx = cfg.context_len
    if values.size < ctx + 1:
        raise ForecastError(f"series of length {values.size} shorter than context_len + 1 = {ctx + 1}")
    pred_len = min(cfg.pred_len, values.size - ctx)
    length = ctx + pred_len
    sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    opt = ad.Adam(params, lr=cfg.learning_rate, clip=cfg.grad_clip)
    losses = []
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(cfg.batches_per_epoch):
            starts = rng.integers(0, values.size - length + 1, cfg.batch_size)
            scaled = _sample_windows(values, starts, length, ctx)
            t = rng.integers(1, cfg.T + 1, pred_len * cfg.batch_size)
            eps = rng.standard_normal(pred_len * cfg.batch_size)
            loss, grads = loss_and_grad(params, scaled, ctx, t, eps, sched)
            if not np.isfinite(loss):
                raise ForecastError(f"non-finite training loss at epoch {epoch}")
            opt.step(grads)
            epoch_losses.append(loss)
        losses.append(float(np.mean(epoch_losses)))
        log.debug("timegrad epoch %d loss %.5f", epoch, losses[-1])
    for arr in params.values():
        arr.setflags(write=False)
    return TimeGradModel(params, sched, cfg, tuple(losses))


# --- sampling ----------------------------------------------------------------

def derive_seed(base_seed: int, index: int) -> int:
    """Per-path seed, a pure function of (base_seed, index)."""
    state = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def _path_noise(seed: int, horizon: int, T: int) -> np.ndarray:
    # column 0 starts the chain at x_T, column t feeds the reverse step t
    return np.random.default_rng(seed).standard_normal((horizon, T + 1))


def _history_tail(history, ctx: int) -> np.ndarray:
    values = np.asarray(history.values if isinstance(history, PriceSeries) else history, dtype=float)
    if values.ndim != 1 or values.size < ctx:
        raise ForecastError(f"history of length {values.size} shorter than context_len {ctx}")
    return values[-ctx:]


def sample_batch(model: TimeGradModel, histories: np.ndarray, horizon: int, noise: np.ndarray) -> np.ndarray:
    """Draw one trajectory per history row.

    ``histories`` is (B, context_len) in price units, ``noise`` is
    (B, horizon, T + 1) of unit Gaussians. Returns (B, horizon) prices.
    """
    sched = model.schedule
    p = model.params
    batch = histories.shape[0]
    center, scale = window_stats(histories)
    h = encode_batch((histories - center[:, None]) / scale[:, None], p)
    emb_table = step_embedding(np.arange(sched.T + 1))
    out = np.empty((batch, horizon))
    for k in range(horizon):
        x = noise[:, k, 0:1]
        for t in range(sched.T, 0, -1):
            emb = np.broadcast_to(emb_table[t], (batch, EMBED_SIZE))
            eps_hat = denoiser(x, emb, h, p)
            x = _reverse_update(x, t, eps_hat, sched, noise[:, k, t:t + 1])
        price = x[:, 0] * scale + center
        out[:, k] = price
        h = gru_cell(((price - center) / scale)[:, None], h, p)
    return out


def sample_path(model: TimeGradModel, history, horizon: int, seed: int) -> np.ndarray:
    """One sampled price trajectory of length ``horizon``."""
    tail = _history_tail(history, model.context_len)
    if horizon < 0:
        raise ForecastError("horizon must be non-negative")
    noise = _path_noise(seed, horizon, model.schedule.T)[None]
    return sample_batch(model, tail[None, :], horizon, noise)[0]


def sample_ensemble(model: TimeGradModel, history, horizon: int, num_paths: int, seed: int) -> ForecastEnsemble:
    """``num_paths`` independent trajectories with seeds ``derive_seed(seed, i)``."""
    if num_paths < 1:
        raise ForecastError("num_paths must be at least 1")
    if horizon < 0:
        raise ForecastError("horizon must be non-negative")
    tail = _history_tail(history, model.context_len)
    T = model.schedule.T
    noise = np.stack([_path_noise(derive_seed(seed, i), horizon, T) for i in range(num_paths)])
    paths = sample_batch(model, np.repeat(tail[None, :], num_paths, axis=0), horizon, noise)
    return ForecastEnsemble(paths)


def aggregate_point(ensemble: ForecastEnsemble, mode: str = "median") -> np.ndarray:
    paths = ensemble.paths if isinstance(ensemble, ForecastEnsemble) else np.asarray(ensemble, dtype=float)
    if paths.ndim != 2 or paths.shape[0] == 0:
        raise ForecastError("cannot aggregate an empty ensemble")
    if mode == "median":
        return np.median(paths, axis=0)
    if mode == "mean":
        return paths.mean(axis=0)
    raise ForecastError(f"unknown aggregation mode {mode!r}")
