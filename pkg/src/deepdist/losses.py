"""Negative log-likelihood objectives over raw network outputs.

A network head emits one unconstrained vector per time step, of width 2, 3
or 4 depending on the distribution. :func:`link_transform` maps it to valid
parameters::

    mu    = a
    sigma = softplus(s) + 1e-6
    nu    = 2 + softplus(d)
    xi    = exp(k)            (k clamped to [-30, 30])

Each ``nll_*`` function returns the batch-mean loss together with its exact
gradient with respect to the raw outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from deepdist import special
from deepdist.distributions import Kind
from deepdist.errors import DomainError, NumericError

SIGMA_EPS = 1e-6
NU_OFFSET = 2.0
XI_LOG_CLAMP = 30.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG2 = math.log(2.0)


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    # log(exp(y) - 1), stable for large y
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class LinkedParams:
    """Constrained parameters produced by :func:`link_transform`.

    ``n_clamped`` counts skewness outputs that hit the exp() clamp.
    """

    mu: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray | None = None
    xi: np.ndarray | None = None
    n_clamped: int = 0


def _check_raw(raw, kind: Kind) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.ndim != 2 or raw.shape[1] != kind.n_params:
        raise DomainError(
            f"{kind.value} expects raw outputs of width {kind.n_params}, got shape {raw.shape}"
        )
    if not np.all(np.isfinite(raw)):
        raise DomainError("raw outputs must be finite")
    return raw


def link_transform(raw, kind: Kind) -> LinkedParams:
    """Map raw head outputs of shape ``[b, K]`` (or ``[K]``) to parameters."""
    kind = Kind(kind)
    raw = _check_raw(raw, kind)
    mu = raw[:, 0].copy()
    sigma = softplus(raw[:, 1]) + SIGMA_EPS
    nu = xi = None
    n_clamped = 0
    if kind is not Kind.NORMAL:
        nu = NU_OFFSET + softplus(raw[:, 2])
    if kind is Kind.SKEWED_T:
        k = raw[:, 3]
        n_clamped = int(np.count_nonzero(np.abs(k) > XI_LOG_CLAMP))
        xi = np.exp(np.clip(k, -XI_LOG_CLAMP, XI_LOG_CLAMP))
    return LinkedParams(mu, sigma, nu, xi, n_clamped)


def inverse_link(params: LinkedParams, kind: Kind) -> np.ndarray:
    """Raw outputs that :func:`link_transform` maps back to ``params``."""
    kind = Kind(kind)
    cols = [np.asarray(params.mu, float), inverse_softplus(np.asarray(params.sigma, float) - SIGMA_EPS)]
    if kind is not Kind.NORMAL:
        cols.append(inverse_softplus(np.asarray(params.nu, float) - NU_OFFSET))
    if kind is Kind.SKEWED_T:
        cols.append(np.log(np.asarray(params.xi, float)))
    return np.column_stack(np.broadcast_arrays(*cols))


# --- per-observation terms in natural parameters ------------------------------


def nll_terms(kind: Kind, r, mu, sigma, nu=None, xi=None) -> np.ndarray:
    """Per-observation negative log-density ``-log f(r | mu, sigma, nu, xi)``."""
    kind = Kind(kind)
    r, mu, sigma = (np.asarray(v, dtype=float) for v in (r, mu, sigma))
    z = (r - mu) / sigma
    if kind is Kind.NORMAL:
        return _HALF_LOG_2PI + np.log(sigma) + 0.5 * z * z
    nu = np.asarray(nu, dtype=float)
    if kind is Kind.STUDENT_T:
        y = z
        skew_term = 0.0
    else:
        xi = np.asarray(xi, dtype=float)
        y = np.where(z < 0, z * xi, z / xi)
        skew_term = np.log(xi + 1.0 / xi) - _LOG2
    log_norm = (
        special.lgamma(0.5 * (nu + 1.0)) - special.lgamma(0.5 * nu) - 0.5 * np.log(nu * math.pi)
    )
    return skew_term + np.log(sigma) - log_norm + 0.5 * (nu + 1.0) * np.log1p(y * y / nu)


def nll_terms_grad(kind: Kind, r, mu, sigma, nu=None, xi=None):
    """Per-observation terms and their partials in (mu, sigma, nu, xi).

    Returns ``(terms, grads)`` where ``grads`` has one column per parameter
    of ``kind``. At the skewed-t branch point ``r == mu`` the right-hand
    branch is used, so the partials there are right-hand derivatives.
    """
    kind = Kind(kind)
    r, mu, sigma = (np.asarray(v, dtype=float) for v in (r, mu, sigma))
    z = (r - mu) / sigma
    terms = nll_terms(kind, r, mu, sigma, nu, xi)
    if kind is Kind.NORMAL:
        d_mu = -z / sigma
        d_sigma = (1.0 - z * z) / sigma
        return terms, np.column_stack([d_mu, d_sigma])
    nu = np.asarray(nu, dtype=float)
    if kind is Kind.STUDENT_T:
        scale = np.ones_like(z)
        y = z
    else:
        xi = np.asarray(xi, dtype=float)
        left = z < 0
        scale = np.where(left, xi, 1.0 / xi)
        y = z * scale
    dl_dy = (nu + 1.0) * y / (nu + y * y)
    d_mu = -dl_dy * scale / sigma
    d_sigma = (1.0 - dl_dy * y) / sigma
    d_nu = (
        -0.5 * special.digamma(0.5 * (nu + 1.0))
        + 0.5 * special.digamma(0.5 * nu)
        + 0.5 / nu
        + 0.5 * np.log1p(y * y / nu)
        - 0.5 * (nu + 1.0) * y * y / (nu * (nu + y * y))
    )
    cols = [d_mu, d_sigma, d_nu * np.ones_like(z)]
    if kind is Kind.SKEWED_T:
        dy_dxi = np.where(left, z, -z / (xi * xi))
        d_xi = (1.0 - 1.0 / (xi * xi)) / (xi + 1.0 / xi) + dl_dy * dy_dxi
        cols.append(d_xi)
    return terms, np.column_stack(cols)


# --- batch losses over raw outputs --------------------------------------------


def _nll(kind: Kind, raw_batch, returns):
    raw = _check_raw(raw_batch, kind)
    r = np.asarray(returns, dtype=float).ravel()
    if r.shape[0] != raw.shape[0]:
        raise DomainError(f"batch size mismatch: {raw.shape[0]} raw rows vs {r.shape[0]} returns")
    p = link_transform(raw, kind)
    with np.errstate(all="ignore"):
        terms, g_nat = nll_terms_grad(kind, r, p.mu, p.sigma, p.nu, p.xi)
    bad = ~np.isfinite(terms)
    if bad.any():
        i = int(np.argmax(bad))
        raise NumericError(f"non-finite {kind.value} NLL at batch index {i} (r={r[i]!r})")
    b = raw.shape[0]
    grad = np.empty_like(raw)
    grad[:, 0] = g_nat[:, 0]
    grad[:, 1] = g_nat[:, 1] * sigmoid(raw[:, 1])
    if kind is not Kind.NORMAL:
        grad[:, 2] = g_nat[:, 2] * sigmoid(raw[:, 2])
    if kind is Kind.SKEWED_T:
        inside = np.abs(raw[:, 3]) <= XI_LOG_CLAMP
        grad[:, 3] = np.where(inside, g_nat[:, 3] * p.xi, 0.0)
    if not np.all(np.isfinite(grad)):
        i = int(np.argmax(~np.all(np.isfinite(grad), axis=1)))
        raise NumericError(f"non-finite {kind.value} NLL gradient at batch index {i}")
    return float(np.mean(terms)), grad / b


def nll_normal(raw_batch, returns):
    """Gaussian NLL (constant ``0.5 * log(2 pi)`` included)."""
    return _nll(Kind.NORMAL, raw_batch, returns)


def nll_student(raw_batch, returns):
    """Student's t NLL."""
    return _nll(Kind.STUDENT_T, raw_batch, returns)


def nll_skewt(raw_batch, returns):
    """Fernandez-Steel skewed t NLL."""
    return _nll(Kind.SKEWED_T, raw_batch, returns)


def nll(kind: Kind, raw_batch, returns):
    """Dispatch to the NLL for ``kind``; returns ``(loss, grad)``."""
    return _nll(Kind(kind), raw_batch, returns)
