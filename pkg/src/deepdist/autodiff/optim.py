"""Adam, L2 regularisation and gradient clipping on plain numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list, grads: list, state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, state)``.

    Accumulators are created on the first call with the parameter shapes.
    ``params`` are not modified in place.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out, state


def l2_penalty(weights: list, lam: float = 0.002):
    """``lam * sum(w^2)`` over weight matrices and its gradient ``2 lam w``."""
    loss = lam * float(sum(np.sum(w * w) for w in weights))
    return loss, [2.0 * lam * w for w in weights]


def clip_global_norm(grads: list, max_norm: float = 5.0):
    """Scale ``grads`` so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm
