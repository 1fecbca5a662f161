"""Proper scoring rules and calibration diagnostics for distributional forecasts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.stats import kstwo

from deepdist.distributions import DistributionSpec, Kind, cdf, log_pdf
from deepdist.errors import InsufficientDataError, NumericError

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
CRPS_ABS_TOL = 1e-8


def lps(forecast: DistributionSpec, realized):
    """Log predictive score ``-log f(realized)``; lower is better."""
    out = -np.asarray(log_pdf(forecast, realized))
    return float(out) if out.ndim == 0 else out


def crps_normal(mu, sigma, realized):
    """Closed-form CRPS of a Gaussian forecast."""
    mu, sigma, x = (np.asarray(v, dtype=float) for v in (mu, sigma, realized))
    z = (x - mu) / sigma
    spec = DistributionSpec.normal(0.0, 1.0)
    big_phi = np.asarray(cdf(spec, z))
    small_phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out = sigma * (z * (2.0 * big_phi - 1.0) + 2.0 * small_phi - _INV_SQRT_PI)
    return float(out) if out.ndim == 0 else out


def _stack(spec: DistributionSpec, n: int, copies: int) -> DistributionSpec:
    return DistributionSpec(spec.kind, *(
        None if v is None else np.tile(np.broadcast_to(np.asarray(v, dtype=float), (n,)), copies)
        for v in spec.params()))


def crps_quadrature(forecast: DistributionSpec, realized, epsabs: float = CRPS_ABS_TOL):
    """CRPS by adaptive quadrature of ``int (F(y) - 1{y >= x})^2 dy``.

    Each forecast's integral is split into three pieces: from the
    realization ``x`` to the location ``mu`` (where the skewed-t density has
    a derivative kink), from ``mu`` outwards to infinity on that side, and
    from ``x`` to infinity on the opposite side. The infinite pieces use
    ``y = x +/- sigma * u / (1 - u)``. Every piece of every forecast is
    integrated together on ``u in [0, 1]`` with one shared adaptive
    Gauss-Kronrod subdivision and absolute tolerance ``epsabs``.
    """
    x = np.atleast_1d(np.asarray(realized, dtype=float))
    n = np.broadcast(x, np.atleast_1d(forecast.mu)).size
    x = np.broadcast_to(x, (n,)).astype(float)
    mu = np.broadcast_to(np.asarray(forecast.mu, dtype=float), (n,))
    sig = np.broadcast_to(np.asarray(forecast.sigma, dtype=float), (n,))
    dist = np.abs(x - mu) / sig
    # +1 when the location lies above x (the near piece runs rightwards)
    side = np.where(x > mu, -1.0, 1.0)
    tri = _stack(forecast, n, 3)

    def piece(F, direction):
        # direction < 0: y below x, integrand F^2; otherwise (1 - F)^2
        return np.where(direction < 0, F * F, (1.0 - F) ** 2)

    def integrand(u):
        t = u / (1.0 - u) if u < 1.0 else np.inf
        jac = 1.0 / (1.0 - u) ** 2 if u < 1.0 else np.inf
        y = np.concatenate([x + side * sig * u * dist,
                            x + side * sig * (dist + t),
                            x - side * sig * t])
        F = np.asarray(cdf(tri, y))
        near = piece(F[:n], side) * sig * dist
        with np.errstate(invalid="ignore"):
            far = piece(F[n:2 * n], side) * sig * jac
            other = piece(F[2 * n:], -side) * sig * jac
        return np.nan_to_num(np.concatenate([near, far, other]), nan=0.0, posinf=0.0)

    res, err, info = quad_vec(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=1e-10,
                              norm="max", limit=2000, full_output=True)
    if not info.success:
        raise NumericError(f"CRPS quadrature did not converge: {info.message}")
    out = res[:n] + res[n:2 * n] + res[2 * n:]
    return float(out[0]) if np.ndim(realized) == 0 and not forecast.batched else out


def crps(forecast: DistributionSpec, realized):
    """Continuous ranked probability score; closed form for Normal, quadrature otherwise."""
    if forecast.kind is Kind.NORMAL:
        return crps_normal(forecast.mu, forecast.sigma, realized)
    return crps_quadrature(forecast, realized)


def crps_sample(draws, realized) -> float:
    """Sample estimator ``E|X - x| - 0.5 E|X - X'|`` from draws of the forecast.

    ``E|X - X'|`` is the unbiased pair average over ``i != j``, computed from
    the sorted draws in ``O(m log m)``.
    """
    d = np.sort(np.asarray(draws, dtype=float).ravel())
    m = d.size
    if m < 2:
        raise InsufficientDataError("crps_sample needs at least two draws")
    term1 = np.mean(np.abs(d - realized))
    i = np.arange(1, m + 1)
    pair_mean = 2.0 * np.sum((2 * i - m - 1) * d) / (m * (m - 1.0))
    return float(term1 - 0.5 * pair_mean)


def pit(forecast: DistributionSpec, realized):
    """Probability integral transform ``F(realized)``."""
    return cdf(forecast, realized)


def pit_uniformity_test(pits) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test of PIT values against U(0, 1).

    The p-value uses the exact finite-sample distribution of the KS statistic.
    """
    u = np.sort(np.asarray(pits, dtype=float).ravel())
    n = u.size
    if n < 10:
        raise InsufficientDataError(f"PIT uniformity test needs >= 10 values, got {n}")
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
    return d, float(kstwo.sf(d, n))


@dataclass
class ScoreSummary:
    mean_lps: float
    mean_crps: float
    pit: np.ndarray
    ks_statistic: float
    pit_pvalue: float
    count: int

    def histogram(self, bins: int = 10) -> list[int]:
        counts, _ = np.histogram(self.pit, bins=bins, range=(0.0, 1.0))
        return counts.tolist()

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_lps": self.mean_lps,
            "mean_crps": self.mean_crps,
            "ks_statistic": self.ks_statistic,
            "pit_pvalue": self.pit_pvalue,
            "pit_histogram": self.histogram(),
        }


def summarize(forecast: DistributionSpec, realized) -> ScoreSummary:
    """Score a batch of forecasts against realized returns."""
    r = np.asarray(realized, dtype=float)
    scores = np.atleast_1d(lps(forecast, r))
    c = np.atleast_1d(crps(forecast, r))
    u = np.atleast_1d(np.asarray(pit(forecast, r)))
    stat, p = pit_uniformity_test(u)
    return ScoreSummary(float(np.mean(scores)), float(np.mean(c)), u, stat, p, int(r.size))


def format_number(key: str, value):
    """Fixed six decimals for scores, six significant digits for p-values/statistics."""
    if value is None or isinstance(value, (int, bool, str, list)):
        return value
    if key.startswith("mean_") or key.endswith("_percent"):
        return f"{value:.6f}"
    return f"{value:.6g}"


def dumps_fixed(payload: dict) -> str:
    """JSON with floats rendered through :func:`format_number` (as JSON numbers)."""

    def render(key, value, indent):
        pad = "  " * indent
        if isinstance(value, dict):
            inner = ",\n".join(f'{pad}  {json.dumps(k)}: {render(k, v, indent + 1)}' for k, v in value.items())
            return "{\n" + inner + "\n" + pad + "}" if value else "{}"
        if isinstance(value, list):
            return "[" + ", ".join(render(key, v, indent) for v in value) + "]"
        if isinstance(value, float):
            if not math.isfinite(value):
                return "null"
            return format_number(key, value)
        return json.dumps(value)

    return render("", payload, 0) + "\n"
