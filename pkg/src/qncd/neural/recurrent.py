"""GRU and LSTM layers with full backpropagation through time.

Gate conventions (standard formulations from the original papers, no
peepholes):

GRU:   z = sig(Wz x + Uz h + bz)        update gate; z -> 1 keeps the carry
       r = sig(Wr x + Ur h + br)        reset gate
       n = tanh(Wn x + Un (r*h) + bn)   candidate
       h' = z*h + (1-z)*n

LSTM:  i, f, o = sig(...), g = tanh(...)
       s' = f*s + i*g                   cell state
       h' = o * tanh(s')

Input-to-hidden weights are Glorot-uniform; hidden-to-hidden blocks are
orthogonal; biases start at zero except the LSTM forget gate at 1.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .core import sigmoid
from .mlp import glorot_uniform

CELL_GRU = "gru"
CELL_LSTM = "lstm"


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Orthogonal block(s): for cols = k*rows, k independent orthogonal squares."""
    if cols % rows:
        raise ValidationError("orthogonal init expects cols to be a multiple of rows")
    blocks = []
    for _ in range(cols // rows):
        q, r = np.linalg.qr(rng.normal(size=(rows, rows)))
        blocks.append(q * np.sign(np.diag(r)))
    return np.concatenate(blocks, axis=1)


def init_gru_layer(rng: np.random.Generator, in_dim: int, hidden: int, params: dict, prefix: str):
    params[f"{prefix}wx"] = glorot_uniform(rng, in_dim, 3 * hidden)
    params[f"{prefix}bx"] = np.zeros(3 * hidden)
    params[f"{prefix}uzr"] = orthogonal(rng, hidden, 2 * hidden)
    params[f"{prefix}un"] = orthogonal(rng, hidden, hidden)


def init_lstm_layer(rng: np.random.Generator, in_dim: int, hidden: int, params: dict, prefix: str):
    params[f"{prefix}wx"] = glorot_uniform(rng, in_dim, 4 * hidden)
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0  # forget gate
    params[f"{prefix}bx"] = bias
    params[f"{prefix}uh"] = orthogonal(rng, hidden, 4 * hidden)


def gru_step(params: dict, prefix: str, x_t: np.ndarray, h: np.ndarray):
    """One GRU step on a batch; returns (h_next, step_cache)."""
    hidden = h.shape[-1]
    xp = x_t @ params[f"{prefix}wx"] + params[f"{prefix}bx"]
    hzr = h @ params[f"{prefix}uzr"]
    z = sigmoid(xp[..., :hidden] + hzr[..., :hidden])
    r = sigmoid(xp[..., hidden : 2 * hidden] + hzr[..., hidden:])
    rh = r * h
    n = np.tanh(xp[..., 2 * hidden :] + rh @ params[f"{prefix}un"])
    h_next = z * h + (1.0 - z) * n
    return h_next, (x_t, h, z, r, n, rh)


def lstm_step(params: dict, prefix: str, x_t: np.ndarray, h: np.ndarray, s: np.ndarray):
    """One LSTM step on a batch; returns (h_next, s_next, step_cache)."""
    hidden = h.shape[-1]
    gates = x_t @ params[f"{prefix}wx"] + params[f"{prefix}bx"] + h @ params[f"{prefix}uh"]
    i = sigmoid(gates[..., :hidden])
    f = sigmoid(gates[..., hidden : 2 * hidden])
    g = np.tanh(gates[..., 2 * hidden : 3 * hidden])
    o = sigmoid(gates[..., 3 * hidden :])
    s_next = f * s + i * g
    tanh_s = np.tanh(s_next)
    h_next = o * tanh_s
    return h_next, s_next, (x_t, h, s, i, f, g, o, tanh_s)


def gru_layer_forward(params: dict, prefix: str, xs: np.ndarray):
    """Run a GRU over (B, T, in); returns (B, T, H) outputs and the cache."""
    b, t, _ = xs.shape
    hidden = params[f"{prefix}un"].shape[0]
    h = np.zeros((b, hidden))
    outs = np.empty((b, t, hidden))
    steps = []
    for k in range(t):
        h, cache = gru_step(params, prefix, xs[:, k], h)
        outs[:, k] = h
        steps.append(cache)
    return outs, steps


def gru_layer_backward(params: dict, prefix: str, steps: list, d_outs: np.ndarray, grads: dict):
    """BPTT for one GRU layer; accumulates grads, returns gradient w.r.t. inputs."""
    wx = params[f"{prefix}wx"]
    uzr = params[f"{prefix}uzr"]
    un = params[f"{prefix}un"]
    hidden = un.shape[0]
    b, t, _ = d_outs.shape
    d_wx = np.zeros_like(wx)
    d_bx = np.zeros_like(params[f"{prefix}bx"])
    d_uzr = np.zeros_like(uzr)
    d_un = np.zeros_like(un)
    d_xs = np.empty((b, t, wx.shape[0]))
    dh = np.zeros((b, hidden))
    for k in range(t - 1, -1, -1):
        x_t, h_prev, z, r, n, rh = steps[k]
        dh = dh + d_outs[:, k]
        dz_pre = dh * (h_prev - n) * z * (1.0 - z)
        dn_pre = dh * (1.0 - z) * (1.0 - n**2)
        d_rh = dn_pre @ un.T
        dr_pre = d_rh * h_prev * r * (1.0 - r)
        d_un += rh.T @ dn_pre
        dgates = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)
        d_wx += x_t.T @ dgates
        d_bx += dgates.sum(axis=0)
        d_uzr += h_prev.T @ dgates[:, : 2 * hidden]
        d_xs[:, k] = dgates @ wx.T
        dh = dh * z + d_rh * r + dgates[:, : 2 * hidden] @ uzr.T
    grads[f"{prefix}wx"] = grads.get(f"{prefix}wx", 0) + d_wx
    grads[f"{prefix}bx"] = grads.get(f"{prefix}bx", 0) + d_bx
    grads[f"{prefix}uzr"] = grads.get(f"{prefix}uzr", 0) + d_uzr
    grads[f"{prefix}un"] = grads.get(f"{prefix}un", 0) + d_un
    return d_xs


def lstm_layer_forward(params: dict, prefix: str, xs: np.ndarray):
    b, t, _ = xs.shape
    hidden = params[f"{prefix}uh"].shape[0]
    h = np.zeros((b, hidden))
    s = np.zeros((b, hidden))
    outs = np.empty((b, t, hidden))
    steps = []
    for k in range(t):
        h, s, cache = lstm_step(params, prefix, xs[:, k], h, s)
        outs[:, k] = h
        steps.append(cache)
    return outs, steps


def lstm_layer_backward(params: dict, prefix: str, steps: list, d_outs: np.ndarray, grads: dict):
    wx = params[f"{prefix}wx"]
    uh = params[f"{prefix}uh"]
    hidden = uh.shape[0]
    b, t, _ = d_outs.shape
    d_wx = np.zeros_like(wx)
    d_bx = np.zeros_like(params[f"{prefix}bx"])
    d_uh = np.zeros_like(uh)
    d_xs = np.empty((b, t, wx.shape[0]))
    dh = np.zeros((b, hidden))
    ds = np.zeros((b, hidden))
    for k in range(t - 1, -1, -1):
        x_t, h_prev, s_prev, i, f, g, o, tanh_s = steps[k]
        dh = dh + d_outs[:, k]
        do_pre = dh * tanh_s * o * (1.0 - o)
        ds = ds + dh * o * (1.0 - tanh_s**2)
        di_pre = ds * g * i * (1.0 - i)
        df_pre = ds * s_prev * f * (1.0 - f)
        dg_pre = ds * i * (1.0 - g**2)
        dgates = np.concatenate([di_pre, df_pre, dg_pre, do_pre], axis=1)
        d_wx += x_t.T @ dgates
        d_bx += dgates.sum(axis=0)
        d_uh += h_prev.T @ dgates
        d_xs[:, k] = dgates @ wx.T
        dh = dgates @ uh.T
        ds = ds * f
    grads[f"{prefix}wx"] = grads.get(f"{prefix}wx", 0) + d_wx
    grads[f"{prefix}bx"] = grads.get(f"{prefix}bx", 0) + d_bx
    grads[f"{prefix}uh"] = grads.get(f"{prefix}uh", 0) + d_uh
    return d_xs


def gru_cell(x_t: np.ndarray, carry: np.ndarray, weights: dict, prefix: str = "") -> np.ndarray:
    """Single GRU update for one input vector and carry vector."""
    h, _ = gru_step(weights, prefix, np.atleast_2d(x_t), np.atleast_2d(carry))
    return h[0]


def lstm_cell(x_t: np.ndarray, carry: tuple, weights: dict, prefix: str = "") -> tuple:
    """Single LSTM update; carry is the (hidden, cell-state) pair."""
    h, s = carry
    h_next, s_next, _ = lstm_step(weights, prefix, np.atleast_2d(x_t), np.atleast_2d(h), np.atleast_2d(s))
    return h_next[0], s_next[0]
