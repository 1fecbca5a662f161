"""Special functions used by the distributions and the statistical tests.

All functions accept scalars or numpy arrays and broadcast like numpy ufuncs.
Scalars in give numpy scalars (0-d) out.
"""

from __future__ import annotations

import math

import numpy as np

from deepdist.errors import DomainError, NumericError

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli-number coefficients B_2k / (2k) for the digamma asymptotic series.
_DIGAMMA_ASYMP = np.array([
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
])

_FPMIN = 1e-300
_EPS = 1e-16


def _lgamma_lanczos(x):
    # valid for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def lgamma(x):
    """Natural log of the absolute value of the Gamma function.

    Raises
    ------
    DomainError
        At the poles (zero and negative integers) or for NaN input.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any((x <= 0) & (x == np.floor(x))):
        raise DomainError("lgamma is undefined at non-positive integers and NaN")
    out = np.empty_like(x)
    big = x >= 0.5
    if np.any(big):
        out[big] = _lgamma_lanczos(x[big])
    small = ~big
    if np.any(small):
        xs = x[small]
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        out[small] = (
            math.log(math.pi)
            - np.log(np.abs(np.sin(math.pi * xs)))
            - _lgamma_lanczos(1.0 - xs)
        )
    return out[()] if out.ndim == 0 else out


def digamma(x):
    """Logarithmic derivative of the Gamma function.

    Upward recurrence to x >= 10, then the asymptotic series. Negative
    non-integers go through the reflection formula.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any((x <= 0) & (x == np.floor(x))):
        raise DomainError("digamma is undefined at non-positive integers and NaN")
    out = np.empty_like(x)
    neg = x < 0.5
    pos = ~neg
    if np.any(pos):
        out[pos] = _digamma_pos(x[pos])
    if np.any(neg):
        xn = x[neg]
        out[neg] = _digamma_pos(1.0 - xn) - math.pi / np.tan(math.pi * xn)
    return out[()] if out.ndim == 0 else out


def _digamma_pos(x):
    x = x.copy()
    shift = np.zeros_like(x)
    while True:
        low = x < 10.0
        if not np.any(low):
            break
        shift[low] -= 1.0 / x[low]
        x[low] += 1.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in _DIGAMMA_ASYMP[::-1]:
        series = (series + c) * inv2
    return shift + np.log(x) - 0.5 / x - series


_erf_vec = np.vectorize(math.erf, otypes=[float])
_erfc_vec = np.vectorize(math.erfc, otypes=[float])


def erf(x):
    """Error function (backed by the C library ``erf``)."""
    out = _erf_vec(np.asarray(x, dtype=float))
    return out[()] if out.ndim == 0 else out


def erfc(x):
    """Complementary error function, accurate in the far tail."""
    out = _erfc_vec(np.asarray(x, dtype=float))
    return out[()] if out.ndim == 0 else out


def _betacf(a, b, x, max_iter):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = np.where(done, h, h * d * c)
        aa = -(a + m) * (qab + m) * x / ((qap + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            return h
    raise NumericError(
        f"incomplete beta continued fraction did not converge in {max_iter} iterations"
    )


def incomplete_beta(a, b, x):
    """Regularized incomplete beta function I_x(a, b).

    Parameters
    ----------
    a, b : float or array_like
        Shape parameters, both > 0.
    x : float or array_like
        Evaluation point in [0, 1].
    """
    a, b, x = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(x, dtype=float)
    )
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("incomplete_beta requires a > 0 and b > 0")
    if np.any(~((x >= 0) & (x <= 1))):
        raise DomainError("incomplete_beta requires 0 <= x <= 1")
    out = np.empty(x.shape)
    out[x == 0] = 0.0
    out[x == 1] = 1.0
    inner = (x > 0) & (x < 1)
    if np.any(inner):
        ai, bi, xi = a[inner], b[inner], x[inner]
        log_front = (
            lgamma(ai + bi) - lgamma(ai) - lgamma(bi)
            + ai * np.log(xi) + bi * np.log1p(-xi)
        )
        front = np.exp(log_front)
        direct = xi < (ai + 1.0) / (ai + bi + 2.0)
        res = np.empty(xi.shape)
        # iterations needed grow like sqrt(max(a, b))
        max_iter = int(200 + 10 * math.sqrt(float(np.max(np.maximum(ai, bi)))))
        if np.any(direct):
            res[direct] = front[direct] * _betacf(
                ai[direct], bi[direct], xi[direct], max_iter
            ) / ai[direct]
        flip = ~direct
        if np.any(flip):
            res[flip] = 1.0 - front[flip] * _betacf(
                bi[flip], ai[flip], 1.0 - xi[flip], max_iter
            ) / bi[flip]
        out[inner] = res
    return out[()] if out.ndim == 0 else out


def _gamma_series(s, x, max_iter):
    ap = s.copy()
    term = 1.0 / s
    total = term.copy()
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(max_iter):
        ap = ap + 1.0
        term = np.where(done, term, term * x / ap)
        total = total + np.where(done, 0.0, term)
        done |= np.abs(term) < np.abs(total) * _EPS
        if done.all():
            return total * np.exp(-x + s * np.log(x) - lgamma(s))
    raise NumericError("incomplete gamma series did not converge")


def _gamma_cf(s, x, max_iter):
    # Lentz continued fraction for the upper regularized gamma
    b = x + 1.0 - s
    c = np.full_like(x, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    done = np.zeros(s.shape, dtype=bool)
    for i in range(1, max_iter + 1):
        an = -i * (i - s)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            return np.exp(-x + s * np.log(x) - lgamma(s)) * h
    raise NumericError("incomplete gamma continued fraction did not converge")


def _incomplete_gamma_pair(s, x):
    s, x = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(x, dtype=float))
    if np.any(~(s > 0)):
        raise DomainError("incomplete_gamma requires s > 0")
    if np.any(~(x >= 0)):
        raise DomainError("incomplete_gamma requires x >= 0")
    lower = np.zeros(x.shape)
    upper = np.ones(x.shape)
    pos = x > 0
    max_iter = int(500 + 10 * math.sqrt(float(np.max(s)) if s.size else 0.0))
    ser = pos & (x < s + 1.0)
    if np.any(ser):
        p = _gamma_series(s[ser], x[ser], max_iter)
        lower[ser] = p
        upper[ser] = 1.0 - p
    cf = pos & ~ser
    if np.any(cf):
        q = _gamma_cf(s[cf], x[cf], max_iter)
        lower[cf] = 1.0 - q
        upper[cf] = q
    return lower, upper


def incomplete_gamma(s, x):
    """Regularized lower incomplete gamma function P(s, x)."""
    out, _ = _incomplete_gamma_pair(s, x)
    return out[()] if out.ndim == 0 else out


def incomplete_gamma_upper(s, x):
    """Regularized upper incomplete gamma function Q(s, x) = 1 - P(s, x).

    Computed directly (not as ``1 - P``) so small tail probabilities keep
    their relative accuracy.
    """
    _, out = _incomplete_gamma_pair(s, x)
    return out[()] if out.ndim == 0 else out


def chi2_sf(x, df):
    """Chi-square survival function via the upper incomplete gamma."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return incomplete_gamma_upper(0.5 * np.asarray(df, dtype=float), 0.5 * x)
