"""Network layers built on :mod:`deepdist.autodiff.tensor`.

Dense layers compose core ops. The LSTM, convolution and pooling layers are
single fused graph nodes with hand-written backward passes; they are checked
against compositions of core ops and against finite differences in the tests.
"""

from __future__ import annotations

import numpy as np

from deepdist.autodiff.tensor import (
    Tensor,
    as_tensor,
    bias_add,
    make_node,
    matmul,
    relu,
    reshape,
    sigmoid,
    tanh,
)
from deepdist.errors import ShapeError

ACTIVATIONS = {
    "linear": lambda t: t,
    None: lambda t: t,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


# --- initialisation -----------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def lstm_init(rng: np.random.Generator, n_in: int, hidden: int):
    """Input kernel (Glorot), recurrent kernel uniform in +-1/sqrt(h), forget bias 1."""
    wx = glorot_uniform(rng, n_in, 4 * hidden, (n_in, 4 * hidden))
    lim = 1.0 / np.sqrt(hidden)
    wh = rng.uniform(-lim, lim, size=(hidden, 4 * hidden))
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0
    return wx, wh, bias


# --- layers -------------------------------------------------------------------


def dense(x, weights, bias, activation="linear") -> Tensor:
    """``activation(x @ W + b)`` for ``x`` of shape ``[b, n]``."""
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if x.data.ndim != 2 or weights.data.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense: incompatible shapes {x.shape} and {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"dense: bias shape {bias.shape} does not match {weights.shape}")
    return _activation(activation)(bias_add(matmul(x, weights), bias))


def lstm_layer(x, wx, wh, bias, return_sequences: bool = True) -> Tensor:
    """Single LSTM layer over ``x`` of shape ``[b, t, n]``.

    Gate layout along the ``4h`` axis is (input, forget, candidate, output).
    Hidden and cell states start at zero. Returns ``[b, t, h]`` or, without
    ``return_sequences``, the last hidden state ``[b, h]``.
    """
    x, wx, wh, bias = (as_tensor(v) for v in (x, wx, wh, bias))
    if x.data.ndim != 3:
        raise ShapeError(f"lstm_layer: input must be [b, t, n], got {x.shape}")
    b, t, n = x.shape
    if t < 1:
        raise ShapeError("lstm_layer: sequence length must be >= 1")
    h = wh.shape[0]
    if wx.shape != (n, 4 * h) or wh.shape != (h, 4 * h) or bias.shape != (4 * h,):
        raise ShapeError(
            f"lstm_layer: weights {wx.shape}, {wh.shape}, {bias.shape} do not fit input {x.shape}"
        )
    h2, h3 = 2 * h, 3 * h
    # Internally the gates are ordered (i, f, o, g) so the three sigmoid
    # blocks are contiguous, and their pre-activations are halved through
    # the weights so that one tanh call serves every gate:
    # sigmoid(v) = 0.5 + 0.5 * tanh(v / 2).
    perm = np.concatenate([np.arange(h2), np.arange(h3, 4 * h), np.arange(h2, h3)])
    scale = np.ones(4 * h)
    scale[:h3] = 0.5
    Wx_s = wx.data[:, perm] * scale
    Wh_s = wh.data[:, perm] * scale
    xt = np.ascontiguousarray(x.data.transpose(1, 0, 2))
    gates = (xt.reshape(t * b, n) @ Wx_s).reshape(t, b, 4 * h)
    gates += bias.data[perm] * scale
    cells = np.empty((t + 1, b, h))
    hiddens = np.empty((t + 1, b, h))
    cells[0] = 0.0
    hiddens[0] = 0.0
    tanh_c = np.empty((t, b, h))
    tmp = np.empty((b, h))
    for s in range(t):
        a = gates[s]
        if s:
            a += hiddens[s] @ Wh_s
        np.tanh(a, out=a)
        sg = a[:, :h3]
        sg *= 0.5
        sg += 0.5
        c = cells[s + 1]
        np.multiply(a[:, h:h2], cells[s], out=c)
        np.multiply(a[:, :h], a[:, h3:], out=tmp)
        c += tmp
        tc = np.tanh(c, out=tanh_c[s])
        np.multiply(a[:, h2:h3], tc, out=hiddens[s + 1])
    if return_sequences:
        out = np.ascontiguousarray(hiddens[1:].transpose(1, 0, 2))
    else:
        out = hiddens[t].copy()

    def back(g):
        da_all = np.empty((t, b, 4 * h))
        if return_sequences:
            g_t = g.transpose(1, 0, 2)
        dh_next = None
        dc = None
        WhT = np.ascontiguousarray(wh.data[:, perm].T)
        for s in range(t - 1, -1, -1):
            if return_sequences:
                dh = g_t[s] if dh_next is None else dh_next + g_t[s]
            elif dh_next is None:
                dh = g
            else:
                dh = dh_next
            gs = gates[s]
            i_g, f_g, o_g, c_g = gs[:, :h], gs[:, h:h2], gs[:, h2:h3], gs[:, h3:]
            tc = tanh_c[s]
            da = da_all[s]
            # output gate: dh * tanh(c) * o (1 - o)
            do = da[:, h2:h3]
            np.multiply(dh, tc, out=do)
            dcell = dh * o_g
            dcell *= 1.0 - tc * tc
            if dc is not None:
                dcell += dc
            # sigmoid derivative s (1 - s) for the i, f, o block at once
            dsig = da[:, :h3]
            np.multiply(dcell, c_g, out=dsig[:, :h])
            np.multiply(dcell, cells[s], out=dsig[:, h:h2])
            dsig *= gs[:, :h3]
            dsig *= 1.0 - gs[:, :h3]
            dg = da[:, h3:]
            np.multiply(c_g, c_g, out=dg)
            np.subtract(1.0, dg, out=dg)
            dg *= dcell
            dg *= i_g
            dc = dcell
            dc *= f_g
            if s:
                dh_next = da @ WhT
        da_flat = da_all.reshape(t * b, 4 * h)
        inv = np.argsort(perm)
        if x.requires_grad:
            x.accumulate((da_flat @ wx.data[:, perm].T).reshape(t, b, n).transpose(1, 0, 2))
        if wx.requires_grad:
            wx.accumulate((xt.reshape(t * b, n).T @ da_flat)[:, inv])
        if wh.requires_grad:
            wh.accumulate((hiddens[:t].reshape(t * b, h).T @ da_flat)[:, inv])
        if bias.requires_grad:
            bias.accumulate(da_flat.sum(axis=0)[inv])

    return make_node(out, (x, wx, wh, bias), back, "lstm")


def conv1d(x, kernel, bias, activation="linear") -> Tensor:
    """Valid 1-D cross-correlation.

    ``x`` is ``[b, t, c]``; ``kernel`` is ``[k, c, f]``; output is
    ``[b, t - k + 1, f]``.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.data.ndim != 3 or kernel.data.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise ShapeError(f"conv1d: incompatible shapes {x.shape} and {kernel.shape}")
    b, t, c = x.shape
    k, _, f = kernel.shape
    if t < k:
        raise ShapeError(f"conv1d: sequence length {t} shorter than kernel {k}")
    if bias.shape != (f,):
        raise ShapeError(f"conv1d: bias shape {bias.shape} does not match {f} filters")
    tout = t - k + 1
    cols = np.concatenate([x.data[:, j:j + tout, :] for j in range(k)], axis=2)
    w2 = kernel.data.reshape(k * c, f)
    pre = cols @ w2 + bias.data

    def back(g):
        g2 = g.reshape(b * tout, f)
        if x.requires_grad:
            dcols = (g2 @ w2.T).reshape(b, tout, k * c)
            dx = np.zeros((b, t, c))
            for j in range(k):
                dx[:, j:j + tout, :] += dcols[:, :, j * c:(j + 1) * c]
            x.accumulate(dx)
        if kernel.requires_grad:
            kernel.accumulate((cols.reshape(b * tout, k * c).T @ g2).reshape(k, c, f))
        if bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))

    return _activation(activation)(make_node(pre, (x, kernel, bias), back, "conv1d"))


def maxpool1d(x, pool: int) -> Tensor:
    """Non-overlapping max pooling along time; a trailing remainder is dropped.

    The gradient is routed to the first maximal element of each window.
    """
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError(f"maxpool1d: input must be [b, t, c], got {x.shape}")
    b, t, c = x.shape
    tout = t // pool
    if tout < 1:
        raise ShapeError(f"maxpool1d: sequence length {t} shorter than pool {pool}")
    win = x.data[:, :tout * pool, :].reshape(b, tout, pool, c)
    arg = np.argmax(win, axis=2)
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def back(g):
        if x.requires_grad:
            dwin = np.zeros((b, tout, pool, c))
            np.put_along_axis(dwin, arg[:, :, None, :], g[:, :, None, :], axis=2)
            dx = np.zeros((b, t, c))
            dx[:, :tout * pool, :] = dwin.reshape(b, tout * pool, c)
            x.accumulate(dx)

    return make_node(out, (x,), back, "maxpool1d")


def flatten(x) -> Tensor:
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1))


def dropout(x, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by ``1/(1-rate)``."""
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def back(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return make_node(x.data * mask, (x,), back, "dropout")
