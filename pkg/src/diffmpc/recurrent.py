"""Gated recurrent cell shared by the diffusion forecaster and the RNN point baseline."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .market_data import SCALE_FLOOR

GRU_KEYS = ("gru_wx", "gru_uh", "gru_bx", "gru_bh")


def init_gru(hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(hidden)
    return {
        "gru_wx": rng.uniform(-bound, bound, (1, 3 * hidden)),
        "gru_uh": rng.uniform(-bound, bound, (hidden, 3 * hidden)),
        "gru_bx": rng.uniform(-bound, bound, 3 * hidden),
        "gru_bh": rng.uniform(-bound, bound, 3 * hidden),
    }


def gru_shapes(params: dict) -> dict[str, tuple]:
    return {k: tuple(np.shape(params[k].value if isinstance(params[k], ad.Tensor) else params[k]))
            for k in GRU_KEYS}


def gru_cell(x, h, p):
    """One update for a batch: ``x`` is (B, 1), ``h`` is (B, H).

    Gate layout along the 3H axis is reset, update, candidate::

        r = sigmoid(Wx_r x + bx_r + Uh_r h + bh_r)
        z = sigmoid(Wx_z x + bx_z + Uh_z h + bh_z)
        n = tanh(Wx_n x + bx_n + r * (Uh_n h + bh_n))
        h' = (1 - z) * n + z * h
    """
    hidden = h.shape[-1]
    gx = x @ p["gru_wx"] + p["gru_bx"]
    gh = h @ p["gru_uh"] + p["gru_bh"]
    r = ad.sigmoid(gx[:, :hidden] + gh[:, :hidden])
    z = ad.sigmoid(gx[:, hidden:2 * hidden] + gh[:, hidden:2 * hidden])
    n = ad.tanh(gx[:, 2 * hidden:] + r * gh[:, 2 * hidden:])
    return (1.0 - z) * n + z * h


def hidden_size(params: dict) -> int:
    uh = params["gru_uh"]
    return (uh.value if isinstance(uh, ad.Tensor) else uh).shape[0]


def encode_batch(scaled: np.ndarray, params: dict) -> np.ndarray:
    """Fold the cell over each row of ``scaled`` (B, L) from a zero state."""
    h = np.zeros((scaled.shape[0], hidden_size(params)))
    for j in range(scaled.shape[1]):
        h = gru_cell(scaled[:, j:j + 1], h, params)
    return h


def window_stats(windows: np.ndarray, floor: float = SCALE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise mean and floored population std, the per-call scaler policy."""
    center = windows.mean(axis=1)
    scale = np.maximum(windows.std(axis=1), floor)
    return center, scale
