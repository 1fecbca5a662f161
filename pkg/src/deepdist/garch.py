"""GARCH(1,1) maximum-likelihood baseline.

Returns follow ``r_t = mu + sigma_t z_t`` with unit-variance innovations
``z_t`` (Normal, Student's t or skewed t) and

    sigma2_t = omega + alpha * (r_{t-1} - mu)^2 + beta * sigma2_{t-1},

started at the unconditional variance ``omega / (1 - alpha - beta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from deepdist import losses
from deepdist.distributions import DistributionSpec, Kind, from_mean_sd
from deepdist.errors import DomainError, EstimationError, InsufficientDataError

MIN_OBS = 250
_PERSIST_MAX = 1.0 - 1e-8


@dataclass(frozen=True)
class GarchParams:
    mu: float
    omega: float
    alpha: float
    beta: float
    kind: Kind = Kind.NORMAL
    nu: float | None = None
    xi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not (self.omega > 0 and self.alpha >= 0 and self.beta >= 0):
            raise DomainError("GARCH requires omega > 0, alpha >= 0, beta >= 0")
        if not self.alpha + self.beta < 1:
            raise DomainError(f"non-stationary GARCH: alpha + beta = {self.alpha + self.beta}")
        if self.kind is not Kind.NORMAL and not (self.nu is not None and self.nu > 2):
            raise DomainError("Student-t innovations require nu > 2")
        if self.kind is Kind.SKEWED_T and not (self.xi is not None and self.xi > 0):
            raise DomainError("skewed-t innovations require xi > 0")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "mu": self.mu, "omega": self.omega,
                "alpha": self.alpha, "beta": self.beta, "nu": self.nu, "xi": self.xi}


def garch_filter(params: GarchParams, returns) -> np.ndarray:
    """Conditional variances ``sigma2_t`` for every observation of ``returns``."""
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise DomainError("garch_filter needs at least 2 observations")
    eps2 = (r - params.mu) ** 2
    s0 = params.unconditional_variance
    drive = params.omega + params.alpha * eps2[:-1]
    # sigma2_t - beta * sigma2_{t-1} = omega + alpha * eps2_{t-1}
    tail, _ = lfilter([1.0], [1.0, -params.beta], drive, zi=[params.beta * s0])
    return np.concatenate(([s0], tail))


def _next_variance(params: GarchParams, returns, var) -> float:
    return params.omega + params.alpha * (returns[-1] - params.mu) ** 2 + params.beta * var[-1]


def conditional_specs(params: GarchParams, variances) -> DistributionSpec:
    return from_mean_sd(params.kind, np.full(np.shape(variances), params.mu),
                        np.sqrt(variances), params.nu, params.xi)


def garch_nll(params: GarchParams, returns) -> float:
    """Total negative log-likelihood ``-sum log f(r_t | sigma_t)``."""
    r = np.asarray(returns, dtype=float)
    spec = conditional_specs(params, garch_filter(params, r))
    return float(np.sum(losses.nll_terms(spec.kind, r, spec.mu, spec.sigma, spec.nu, spec.xi)))


def garch_forecast(params: GarchParams, history) -> DistributionSpec:
    """One-step-ahead distribution after observing ``history``."""
    h = np.asarray(history, dtype=float)
    var = garch_filter(params, h)
    nxt = _next_variance(params, h, var)
    return conditional_specs(params, np.array(nxt))


def forecast_range(params: GarchParams, returns, start: int, stop: int) -> DistributionSpec:
    """Forecasts for ``returns[start:stop]``, each using data strictly before it."""
    r = np.asarray(returns, dtype=float)
    if start < 2 or stop > r.size or start >= stop:
        raise DomainError("forecast_range needs 2 <= start < stop <= len(returns)")
    var = garch_filter(params, r[:stop])
    return conditional_specs(params, var[start:stop])


# --- estimation ---------------------------------------------------------------


def _unpack(theta, kind: Kind) -> GarchParams:
    mu, log_omega, t_persist, t_split = theta[:4]
    persist = min(float(losses.sigmoid(t_persist)), _PERSIST_MAX)
    split = float(losses.sigmoid(t_split))
    nu = xi = None
    if kind is not Kind.NORMAL:
        nu = float(losses.NU_OFFSET + losses.softplus(theta[4]))
    if kind is Kind.SKEWED_T:
        xi = float(np.exp(np.clip(theta[5], -losses.XI_LOG_CLAMP, losses.XI_LOG_CLAMP)))
    return GarchParams(float(mu), float(np.exp(log_omega)), persist * split, persist * (1.0 - split),
                       kind, nu, xi)


def _pack(p: GarchParams) -> np.ndarray:
    persist = p.alpha + p.beta
    split = p.alpha / persist if persist > 0 else 0.5
    logit = lambda q: math.log(q / (1.0 - q))  # noqa: E731
    theta = [p.mu, math.log(p.omega), logit(min(max(persist, 1e-8), _PERSIST_MAX)),
             logit(min(max(split, 1e-8), 1.0 - 1e-8))]
    if p.kind is not Kind.NORMAL:
        theta.append(float(losses.inverse_softplus(p.nu - losses.NU_OFFSET)))
    if p.kind is Kind.SKEWED_T:
        theta.append(math.log(p.xi))
    return np.array(theta)


def _objective(theta, r, kind):
    try:
        value = garch_nll(_unpack(theta, kind), r)
    except (DomainError, FloatingPointError, ValueError):
        return np.inf
    return value if np.isfinite(value) else np.inf


def _nelder_mead(theta0, r, kind, maxiter):
    res = minimize(_objective, theta0, args=(r, kind), method="Nelder-Mead",
                   options={"maxiter": maxiter, "maxfev": 2 * maxiter,
                            "xatol": 1e-8, "fatol": 1e-10, "adaptive": True})
    return res


def garch_fit(returns, kind: Kind = Kind.NORMAL, seed: int = 0, n_starts: int = 3,
              maxiter: int = 4000, start: GarchParams | None = None) -> GarchParams:
    """Nelder-Mead MLE in an unconstrained parameterisation, best of ``n_starts``.

    The transform keeps ``alpha + beta < 1`` and ``omega > 0`` by construction.
    Each start is polished by a restart from its own optimum.
    """
    kind = Kind(kind)
    r = np.asarray(returns, dtype=float)
    if r.size < MIN_OBS:
        raise InsufficientDataError(f"garch_fit needs at least {MIN_OBS} returns, got {r.size}")
    rng = np.random.default_rng(seed)
    var = float(np.var(r))
    base = GarchParams(float(np.mean(r)), max(var * 0.1, 1e-8), 0.08, 0.82, kind,
                       8.0 if kind is not Kind.NORMAL else None,
                       1.0 if kind is Kind.SKEWED_T else None)
    starts = [_pack(start)] if start is not None else []
    theta_base = _pack(base)
    starts.append(theta_base)
    while len(starts) < max(n_starts, 1):
        jitter = rng.normal(scale=0.5, size=theta_base.size)
        jitter[0] = rng.normal(scale=0.1 * math.sqrt(var))
        starts.append(theta_base + jitter)
    best, best_val, failures = None, np.inf, []
    for theta0 in starts[:max(n_starts, 1)]:
        res = _nelder_mead(theta0, r, kind, maxiter)
        res = _nelder_mead(res.x, r, kind, maxiter)
        if not np.isfinite(res.fun):
            failures.append(f"start {np.round(theta0, 3).tolist()}: {res.message}")
            continue
        if res.fun < best_val:
            best, best_val = res.x, res.fun
    if best is None:
        raise EstimationError("all GARCH starts failed: " + "; ".join(failures))
    fitted = _unpack(best, kind)
    if not fitted.alpha + fitted.beta < 1:
        raise EstimationError("fitted GARCH is not stationary")
    return fitted
