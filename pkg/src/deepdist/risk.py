"""Value-at-Risk and Expected Shortfall extraction and backtests.

Long-position convention throughout: VaR is a positive loss,
``VaR = -quantile(alpha)``, and an exceedance is a return below ``-VaR``.
ES is reported in return units (a negative number for usual alphas): the
expected return given that the return falls below the alpha-quantile.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import xlogy

from deepdist import special
from deepdist.distributions import DistributionSpec, Kind, cdf, log_pdf, quantile
from deepdist.errors import DomainError, NumericError

MIN_ES_EXCEEDANCES = 5


def _check_alpha(alpha):
    if not 0 < alpha < 0.5:
        raise DomainError(f"tolerance alpha must lie in (0, 0.5), got {alpha}")


def var_forecast(spec: DistributionSpec, alpha: float):
    _check_alpha(alpha)
    out = -np.asarray(quantile(spec, alpha))
    return float(out) if out.ndim == 0 else out


def _t_std(nu):
    return DistributionSpec(Kind.STUDENT_T, 0.0 * nu, 1.0 + 0.0 * nu, nu)


def es_forecast(spec: DistributionSpec, alpha: float):
    """Expected return conditional on falling below the alpha-quantile."""
    _check_alpha(alpha)
    mu, sigma = np.asarray(spec.mu), np.asarray(spec.sigma)
    if spec.kind is Kind.NORMAL:
        q = np.asarray(quantile(DistributionSpec.normal(), alpha))
        tail = -math.exp(-0.5 * float(q) ** 2) / math.sqrt(2.0 * math.pi) / alpha
        out = mu + sigma * tail
    elif spec.kind is Kind.STUDENT_T:
        nu = np.asarray(spec.nu, dtype=float)
        q = np.asarray(quantile(_t_std(nu), np.full(nu.shape, alpha)))
        dens = np.exp(np.asarray(log_pdf(_t_std(nu), q)))
        tail = -(nu + q * q) / (nu - 1.0) * dens / alpha
        out = mu + sigma * tail
    else:
        out = _es_quadrature(spec, alpha)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _es_quadrature(spec: DistributionSpec, alpha: float):
    scalar = not spec.batched
    n = len(spec)
    q = np.atleast_1d(np.asarray(quantile(spec, np.full(n, alpha) if not scalar else alpha)))
    mu = np.broadcast_to(np.asarray(spec.mu, dtype=float), (n,))
    sigma = np.broadcast_to(np.asarray(spec.sigma, dtype=float), (n,))
    # distance (in sigma units) from the quantile down to the density kink at mu
    kink = np.maximum((q - mu) / sigma, 0.0)
    both = DistributionSpec(spec.kind, *(
        None if v is None else np.tile(np.broadcast_to(np.asarray(v, dtype=float), (n,)), 2)
        for v in spec.params()))

    def integrand(u):
        t = u / (1.0 - u)
        x = np.concatenate([q - u * kink * sigma, q - (kink + t) * sigma])
        dens = np.exp(np.asarray(log_pdf(both, x)))
        w = np.concatenate([kink * sigma, sigma / (1.0 - u) ** 2])
        return x * dens * w

    res, err, info = quad_vec(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                              norm="max", limit=2000, full_output=True)
    if not info.success:
        raise NumericError(f"ES quadrature did not converge: {info.message}")
    out = (res[:n] + res[n:]) / alpha
    return float(out[0]) if scalar else out


@dataclass
class RiskSeries:
    alpha: float
    var: np.ndarray
    es: np.ndarray
    exceedances: np.ndarray

    @property
    def count(self) -> int:
        return int(self.exceedances.sum())


def risk_series(spec: DistributionSpec, returns, alpha: float) -> RiskSeries:
    r = np.asarray(returns, dtype=float)
    var = np.broadcast_to(np.asarray(var_forecast(spec, alpha)), r.shape).copy()
    es = np.broadcast_to(np.asarray(es_forecast(spec, alpha)), r.shape).copy()
    return RiskSeries(alpha, var, es, r < -var)


# --- tests --------------------------------------------------------------------


def _binom_loglik(k, n, p):
    return xlogy(k, p) + xlogy(n - k, 1.0 - p)


def kupiec_test(exceedances: int, n: int, alpha: float) -> tuple[float, float]:
    """Unconditional-coverage likelihood ratio and its chi-square(1) p-value."""
    if not 0 <= exceedances <= n or n < 1:
        raise DomainError("kupiec_test requires 0 <= exceedances <= n and n >= 1")
    x = float(exceedances)
    lr = 2.0 * (_binom_loglik(x, n, x / n) - _binom_loglik(x, n, alpha))
    lr = max(float(lr), 0.0)
    return lr, float(special.chi2_sf(lr, 1))


@dataclass
class ChristoffersenResult:
    lr_ind: float
    p_ind: float
    lr_cc: float
    p_cc: float
    degenerate: bool
    counts: tuple


def christoffersen_test(exceedances, alpha: float = 0.05) -> ChristoffersenResult:
    """First-order Markov independence test and the conditional-coverage test.

    A series of all zeros or all ones has no transition information; it is
    flagged ``degenerate`` and its independence p-value is 1.
    """
    e = np.asarray(exceedances).astype(int).ravel()
    if e.size < 2:
        raise DomainError("christoffersen_test needs a series of length >= 2")
    prev, nxt = e[:-1], e[1:]
    n00 = int(np.sum((prev == 0) & (nxt == 0)))
    n01 = int(np.sum((prev == 0) & (nxt == 1)))
    n10 = int(np.sum((prev == 1) & (nxt == 0)))
    n11 = int(np.sum((prev == 1) & (nxt == 1)))
    lr_uc, _ = kupiec_test(int(e.sum()), e.size, alpha)
    degenerate = e.min() == e.max()
    if degenerate:
        lr_ind = 0.0
    else:
        pi = (n01 + n11) / (n00 + n01 + n10 + n11)
        pi0 = n01 / (n00 + n01) if n00 + n01 else 0.0
        pi1 = n11 / (n10 + n11) if n10 + n11 else 0.0
        restricted = _binom_loglik(n01 + n11, n00 + n01 + n10 + n11, pi)
        unrestricted = _binom_loglik(n01, n00 + n01, pi0) + _binom_loglik(n11, n10 + n11, pi1)
        lr_ind = max(float(2.0 * (unrestricted - restricted)), 0.0)
    p_ind = 1.0 if degenerate else float(special.chi2_sf(lr_ind, 1))
    lr_cc = lr_ind + lr_uc
    return ChristoffersenResult(lr_ind, p_ind, lr_cc, float(special.chi2_sf(lr_cc, 2)),
                                bool(degenerate), (n00, n01, n10, n11))


@dataclass
class McNeilFreyResult:
    pvalue: float | None
    statistic: float | None
    n_exceedances: int
    insufficient: bool = False


def mcneil_frey_residuals(returns, var, es, sigma) -> np.ndarray:
    """Standardised ES residuals ``(r_t - ES_t) / sigma_t`` on exceedance days."""
    r, v, e, s = (np.asarray(a, dtype=float) for a in (returns, var, es, sigma))
    r, v, e, s = np.broadcast_arrays(r, v, e, s)
    if np.any(s == 0):
        raise DomainError("mcneil_frey: zero sigma")
    hit = r < -v
    return (r[hit] - e[hit]) / s[hit]


def mcneil_frey_from_residuals(u, variant: str = "bootstrap", n_boot: int = 10_000,
                               seed: int = 0) -> McNeilFreyResult:
    """One-sided test of ``mean(U) = 0`` against ``mean(U) < 0``.

    ``bootstrap`` resamples the centred residuals and compares studentised
    means; ``sample`` is a one-sample t-test with a Student-t reference.
    """
    u = np.asarray(u, dtype=float).ravel()
    m = u.size
    if m < MIN_ES_EXCEEDANCES:
        return McNeilFreyResult(None, None, m, insufficient=True)
    mean = float(np.mean(u))
    sd = float(np.std(u, ddof=1))
    if sd == 0.0:
        p = 1.0 if mean >= 0 else 0.0
        return McNeilFreyResult(p, 0.0 if mean == 0 else math.copysign(math.inf, mean), m)
    t_obs = mean / (sd / math.sqrt(m))
    if variant == "sample":
        p = float(cdf(DistributionSpec.student_t(0.0, 1.0, m - 1.0), t_obs)) if m > 3 else float("nan")
        return McNeilFreyResult(p, t_obs, m)
    if variant != "bootstrap":
        raise DomainError(f"unknown McNeil-Frey variant {variant!r}")
    rng = np.random.default_rng(seed)
    centred = u - mean
    exceed = 0
    chunk = max(1, 2_000_000 // m)
    done = 0
    while done < n_boot:
        k = min(chunk, n_boot - done)
        draws = centred[rng.integers(0, m, size=(k, m))]
        bm = draws.mean(axis=1)
        bs = draws.std(axis=1, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_star = np.where(bs > 0, bm / (bs / math.sqrt(m)), 0.0)
        exceed += int(np.sum(t_star <= t_obs))
        done += k
    return McNeilFreyResult(exceed / n_boot, t_obs, m)


def mcneil_frey_test(returns, var, es, sigma, variant: str = "bootstrap",
                     n_boot: int = 10_000, seed: int = 0) -> McNeilFreyResult:
    u = mcneil_frey_residuals(returns, var, es, sigma)
    return mcneil_frey_from_residuals(u, variant, n_boot, seed)


@dataclass
class BacktestReport:
    alpha: float
    n: int
    exceedances: int
    exceedance_percent: float
    kupiec_lr: float
    kupiec_p: float
    christoffersen_lr_ind: float
    christoffersen_p_ind: float
    christoffersen_p_cc: float
    christoffersen_degenerate: bool
    es_bootstrap_p: float | None
    es_sample_p: float | None
    es_insufficient: bool

    def to_dict(self) -> dict:
        return asdict(self)


def backtest(spec: DistributionSpec, returns, alpha: float, seed: int = 0,
             n_boot: int = 10_000) -> BacktestReport:
    """Full VaR/ES backtest of batched forecasts at one tolerance level."""
    r = np.asarray(returns, dtype=float)
    rs = risk_series(spec, r, alpha)
    n = r.size
    k = rs.count
    lr, p = kupiec_test(k, n, alpha)
    ch = christoffersen_test(rs.exceedances, alpha)
    sigma = np.broadcast_to(np.asarray(spec.sigma, dtype=float), r.shape)
    u = mcneil_frey_residuals(r, rs.var, rs.es, sigma)
    boot = mcneil_frey_from_residuals(u, "bootstrap", n_boot, seed)
    samp = mcneil_frey_from_residuals(u, "sample")
    return BacktestReport(
        alpha=alpha, n=n, exceedances=k, exceedance_percent=100.0 * k / n,
        kupiec_lr=lr, kupiec_p=p,
        christoffersen_lr_ind=ch.lr_ind, christoffersen_p_ind=ch.p_ind,
        christoffersen_p_cc=ch.p_cc, christoffersen_degenerate=ch.degenerate,
        es_bootstrap_p=boot.pvalue, es_sample_p=samp.pvalue,
        es_insufficient=boot.insufficient,
    )


def kupiec_acceptance_region(n: int, alpha: float, level: float = 0.05) -> tuple[int, int]:
    """Smallest and largest exceedance counts that Kupiec does not reject at ``level``."""
    ok = [k for k in range(n + 1) if kupiec_test(k, n, alpha)[1] >= level]
    return min(ok), max(ok)
