"""Normal, Student's t and Fernandez-Steel skewed Student's t distributions.

Every distribution is location-scale: ``x = mu + sigma * z``. For the skewed t,
``mu`` is the mode and the two halves of a standard t density are stretched
by ``xi`` (right) and ``1/xi`` (left), so ``xi > 1`` skews to the right and
``xi = 1`` recovers the symmetric t.

A :class:`DistributionSpec` may hold scalar parameters or equal-length arrays;
all functions broadcast over both the parameters and the evaluation points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from deepdist import special
from deepdist.errors import DomainError, NumericError

# Degrees of freedom must exceed this value. Tests may lower it to reach nu <= 2.
NU_FLOOR = 2.0

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


class Kind(str, Enum):
    NORMAL = "Normal"
    STUDENT_T = "StudentT"
    SKEWED_T = "SkewedStudentT"

    @property
    def n_params(self) -> int:
        return {Kind.NORMAL: 2, Kind.STUDENT_T: 3, Kind.SKEWED_T: 4}[self]

    @property
    def code(self) -> str:
        """Short command-line code: ``n``, ``std`` or ``sstd``."""
        return {Kind.NORMAL: "n", Kind.STUDENT_T: "std", Kind.SKEWED_T: "sstd"}[self]

    @classmethod
    def from_code(cls, code: str) -> "Kind":
        table = {"n": cls.NORMAL, "std": cls.STUDENT_T, "sstd": cls.SKEWED_T}
        try:
            return table[code.lower()]
        except KeyError:
            try:
                return cls(code)
            except ValueError:
                raise DomainError(f"unknown distribution code {code!r}") from None


def _as_param(value):
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """A distribution kind together with its (possibly batched) parameters."""

    kind: Kind
    mu: float | np.ndarray
    sigma: float | np.ndarray
    nu: float | np.ndarray | None = None
    xi: float | np.ndarray | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "mu", _as_param(self.mu))
        object.__setattr__(self, "sigma", _as_param(self.sigma))
        if kind is Kind.NORMAL:
            if self.nu is not None or self.xi is not None:
                raise DomainError("Normal distribution takes no nu or xi")
        elif self.nu is None:
            raise DomainError(f"{kind.value} requires nu")
        if kind is Kind.SKEWED_T and self.xi is None:
            raise DomainError("SkewedStudentT requires xi")
        if kind is Kind.STUDENT_T and self.xi is not None:
            raise DomainError("StudentT takes no xi")
        if self.nu is not None:
            object.__setattr__(self, "nu", _as_param(self.nu))
        if self.xi is not None:
            object.__setattr__(self, "xi", _as_param(self.xi))
        self._validate()

    def _validate(self):
        if not np.all(np.isfinite(self.mu)):
            raise DomainError("mu must be finite")
        if not np.all(np.isfinite(self.sigma) & (np.asarray(self.sigma) > 0)):
            raise DomainError("sigma must be finite and > 0")
        if self.nu is not None:
            nu = np.asarray(self.nu)
            if not np.all((nu > NU_FLOOR) & ~np.isnan(nu)):
                raise DomainError(f"nu must be > {NU_FLOOR}")
        if self.xi is not None:
            xi = np.asarray(self.xi)
            if not np.all(np.isfinite(xi) & (xi > 0)):
                raise DomainError("xi must be finite and > 0")

    @classmethod
    def normal(cls, mu=0.0, sigma=1.0) -> "DistributionSpec":
        return cls(Kind.NORMAL, mu, sigma)

    @classmethod
    def student_t(cls, mu=0.0, sigma=1.0, nu=5.0) -> "DistributionSpec":
        return cls(Kind.STUDENT_T, mu, sigma, nu)

    @classmethod
    def skewed_t(cls, mu=0.0, sigma=1.0, nu=5.0, xi=1.0) -> "DistributionSpec":
        return cls(Kind.SKEWED_T, mu, sigma, nu, xi)

    @property
    def batched(self) -> bool:
        return any(isinstance(v, np.ndarray) for v in self.params())

    def __len__(self):
        return int(np.broadcast(self.mu, self.sigma, self.nu_or(0.0), self.xi_or(0.0)).size)

    def nu_or(self, default):
        return default if self.nu is None else self.nu

    def xi_or(self, default):
        return default if self.xi is None else self.xi

    def __getitem__(self, idx) -> "DistributionSpec":
        n = len(self)

        def pick(v):
            if v is None:
                return None
            return np.broadcast_to(v, (n,))[idx]

        return DistributionSpec(self.kind, pick(self.mu), pick(self.sigma), pick(self.nu), pick(self.xi))

    def __eq__(self, other):
        if not isinstance(other, DistributionSpec) or self.kind is not other.kind:
            return NotImplemented if not isinstance(other, DistributionSpec) else False
        for a, b in zip(self.params(), other.params()):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True

    __hash__ = None

    def params(self) -> tuple:
        return (self.mu, self.sigma, self.nu, self.xi)


@dataclass(frozen=True)
class SkewTMoments:
    """Moments of ``sigma * z`` for a skewed t variable ``z`` with mode 0."""

    phi: float
    gamma: float
    mean: float
    variance: float


# --- standard (mu=0, sigma=1) building blocks ---------------------------------


def _t_log_norm(nu):
    return special.lgamma(0.5 * (nu + 1.0)) - special.lgamma(0.5 * nu) - 0.5 * np.log(nu * math.pi)


def _t_logpdf_std(y, nu):
    return _t_log_norm(nu) - 0.5 * (nu + 1.0) * np.log1p(y * y / nu)


def _t_cdf_std(t, nu):
    t, nu = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(nu, dtype=float))
    out = np.empty(t.shape)
    inf = np.isinf(t)
    out[inf] = np.where(t[inf] > 0, 1.0, 0.0)
    fin = ~inf
    tf, nf = t[fin], nu[fin]
    t2 = tf * tf
    small = t2 < nf
    res = np.empty(tf.shape)
    # near the centre use I_{t^2/(nu+t^2)}(1/2, nu/2) to avoid cancellation
    if np.any(small):
        c = special.incomplete_beta(0.5, 0.5 * nf[small], t2[small] / (nf[small] + t2[small]))
        res[small] = 0.5 + 0.5 * np.sign(tf[small]) * c
    big = ~small
    if np.any(big):
        tail = 0.5 * special.incomplete_beta(0.5 * nf[big], 0.5, nf[big] / (nf[big] + t2[big]))
        res[big] = np.where(tf[big] < 0, tail, 1.0 - tail)
    out[fin] = res
    return out


def _normal_cdf_std(z):
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / _SQRT2)


# Acklam's rational approximation; refined by Newton steps below.
_A = [-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00]
_B = [-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01]
_C = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00]
_D = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00]


def _normal_ppf_approx(p):
    p = np.asarray(p, dtype=float)
    out = np.empty(p.shape)
    lo = p < 0.02425
    hi = p > 1 - 0.02425
    mid = ~(lo | hi)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = q * num / den
    for mask, sign, pp in ((lo, 1.0, p), (hi, -1.0, 1.0 - p)):
        if np.any(mask):
            q = np.sqrt(-2.0 * np.log(pp[mask]))
            num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
            den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
            out[mask] = sign * num / den
    return out


def _normal_ppf_std(p):
    x = _normal_ppf_approx(p)
    for _ in range(2):
        f = _normal_cdf_std(x) - p
        dens = np.exp(-0.5 * x * x - 0.5 * _LOG_2PI)
        x = x - f / dens
    return x


def _invert_monotone(cdf, logpdf, p, x0, params, max_iter=200):
    """Safeguarded Newton inversion of an increasing cdf, elementwise.

    ``cdf(x, *params)`` and ``logpdf(x, *params)`` are evaluated on the
    still-active subset only. Brackets are grown geometrically until they
    contain the root; Newton steps that leave the bracket fall back to
    bisection.
    """
    p = np.asarray(p, dtype=float)
    x = np.array(x0, dtype=float)
    lo = np.minimum(x, -1.0)
    hi = np.maximum(x, 1.0)
    for _ in range(2100):
        need = cdf(lo, *params) > p
        if not need.any():
            break
        lo = np.where(need, 2.0 * lo, lo)
    for _ in range(2100):
        need = cdf(hi, *params) < p
        if not need.any():
            break
        hi = np.where(need, 2.0 * hi, hi)
    active = np.ones(p.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        xa = x[idx]
        sub = [q[idx] for q in params]
        f = cdf(xa, *sub) - p[idx]
        lo[idx] = np.where(f < 0, xa, lo[idx])
        hi[idx] = np.where(f > 0, xa, hi[idx])
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            step = f / np.exp(logpdf(xa, *sub))
            xn = xa - step
        bad = ~np.isfinite(xn) | (xn <= lo[idx]) | (xn >= hi[idx])
        xn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), xn)
        x[idx] = xn
        conv = (np.abs(xn - xa) <= 1e-14 * (1.0 + np.abs(xa))) | (f == 0)
        conv |= (hi[idx] - lo[idx]) <= 4e-16 * (1.0 + np.abs(xn))
        active[idx[conv]] = False
        if not active.any():
            return x
    raise NumericError("quantile root-finder did not converge")


def _t_ppf_std(p, nu):
    p, nu = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(nu, dtype=float))
    p = p.ravel()
    nu = nu.ravel().copy()
    # solve in the lower half and reflect
    upper = p > 0.5
    q = np.where(upper, 1.0 - p, p)
    z = _normal_ppf_std(q)
    # Cornish-Fisher expansion of the t quantile around the normal quantile
    g1 = (z ** 3 + z) / 4.0
    g2 = (5 * z ** 5 + 16 * z ** 3 + 3 * z) / 96.0
    g3 = (3 * z ** 7 + 19 * z ** 5 + 17 * z ** 3 - 15 * z) / 384.0
    cf = z + g1 / nu + g2 / nu ** 2 + g3 / nu ** 3
    # power-law tail approximation
    log_k = _t_log_norm(nu) + 0.5 * (nu + 1.0) * np.log(nu) - np.log(nu)
    tail = -np.exp((log_k - np.log(np.maximum(q, 1e-300))) / nu)
    pick_tail = np.abs(_t_cdf_std(tail, nu) - q) < np.abs(_t_cdf_std(cf, nu) - q)
    x0 = np.where(pick_tail, tail, cf)
    x0 = np.minimum(x0, 0.0)
    x = _invert_monotone(_t_cdf_std, _t_logpdf_std, q, x0, (nu,)) if q.size else q.copy()
    x = np.where(q == 0.5, 0.0, x)
    return np.where(upper, -x, x)


# --- public operations --------------------------------------------------------


def _broadcast_params(spec: DistributionSpec, x):
    x = np.asarray(x, dtype=float)
    mu, sigma = np.asarray(spec.mu), np.asarray(spec.sigma)
    nu = None if spec.nu is None else np.asarray(spec.nu)
    xi = None if spec.xi is None else np.asarray(spec.xi)
    return x, mu, sigma, nu, xi


def _unwrap(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def log_pdf(spec: DistributionSpec, x):
    """Log-density of ``spec`` at ``x``.

    For the skewed t the point ``x == mu`` uses the right-hand branch.
    """
    x, mu, sigma, nu, xi = _broadcast_params(spec, x)
    if not np.all(np.isfinite(x)):
        raise DomainError("log_pdf requires finite x")
    z = (x - mu) / sigma
    if spec.kind is Kind.NORMAL:
        out = -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * z * z
    elif spec.kind is Kind.STUDENT_T:
        out = _t_logpdf_std(z, nu) - np.log(sigma)
    else:
        y = np.where(z < 0, z * xi, z / xi)
        out = math.log(2.0) - np.log(xi + 1.0 / xi) - np.log(sigma) + _t_logpdf_std(y, nu)
    return _unwrap(out)


def pdf(spec: DistributionSpec, x):
    return _unwrap(np.exp(log_pdf(spec, x)))


def cdf(spec: DistributionSpec, x):
    """Cumulative distribution function of ``spec`` at ``x``."""
    x, mu, sigma, nu, xi = _broadcast_params(spec, x)
    if np.any(np.isnan(x)):
        raise DomainError("cdf requires non-NaN x")
    z = (x - mu) / sigma
    if spec.kind is Kind.NORMAL:
        out = _normal_cdf_std(z)
    elif spec.kind is Kind.STUDENT_T:
        out = _t_cdf_std(z, nu)
    else:
        z, nu, xi = np.broadcast_arrays(z, nu, xi)
        xi2 = xi * xi
        left = z < 0
        out = np.empty(z.shape)
        out[left] = 2.0 / (1.0 + xi2[left]) * _t_cdf_std(z[left] * xi[left], nu[left])
        r = ~left
        out[r] = 1.0 / (1.0 + xi2[r]) + 2.0 * xi2[r] / (1.0 + xi2[r]) * (
            _t_cdf_std(z[r] / xi[r], nu[r]) - 0.5
        )
    return _unwrap(np.clip(out, 0.0, 1.0))


def quantile(spec: DistributionSpec, p):
    """Inverse cdf. ``p`` must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise DomainError("quantile requires 0 < p < 1")
    _, mu, sigma, nu, xi = _broadcast_params(spec, p)
    if spec.kind is Kind.NORMAL:
        z = _normal_ppf_std(p)
    elif spec.kind is Kind.STUDENT_T:
        pb, nub = np.broadcast_arrays(p, nu)
        z = _t_ppf_std(pb, nub).reshape(pb.shape)
    else:
        pb, nub, xib = np.broadcast_arrays(p, nu, xi)
        shape = pb.shape
        pb, nub, xib = pb.ravel(), nub.ravel(), xib.ravel()
        xi2 = xib * xib
        split = 1.0 / (1.0 + xi2)
        left = pb < split
        target = np.where(
            left,
            pb * (1.0 + xi2) / 2.0,
            0.5 + (pb - split) * (1.0 + xi2) / (2.0 * xi2),
        )
        target = np.clip(target, 1e-300, 1.0 - 1e-16)
        t = _t_ppf_std(target, nub)
        z = np.where(left, t / xib, t * xib)
        z = np.where(pb == split, 0.0, z).reshape(shape)
    return _unwrap(mu + sigma * z)


def skewt_moments(sigma: float, nu: float, xi: float) -> SkewTMoments:
    """Mean and variance of a skewed t with mode 0, scale ``sigma``.

    The second-moment factor uses ``(xi^3 + xi^-3) / (xi + xi^-1)``, which
    reduces to the Student-t value ``nu / (nu - 2)`` at ``xi = 1``.
    """
    if not (nu > 2):
        raise DomainError("skewt_moments requires nu > 2 (variance undefined)")
    if not (xi > 0) or not (sigma > 0):
        raise DomainError("skewt_moments requires xi > 0 and sigma > 0")
    lg = float(special.lgamma(0.5 * (nu + 1.0)) - special.lgamma(0.5 * nu))
    inv = 1.0 / xi
    phi = (
        (xi ** 2 - inv ** 2) * 2.0 * nu * math.exp(lg)
        / ((xi + inv) * (nu - 1.0) * math.sqrt(math.pi * nu))
    )
    gamma = (xi ** 3 + inv ** 3) / (xi + inv) * nu / (nu - 2.0)
    return SkewTMoments(phi=phi, gamma=gamma, mean=phi * sigma, variance=(gamma - phi ** 2) * sigma ** 2)


def mean_variance(spec: DistributionSpec):
    """Mean and variance of ``spec`` (arrays when the spec is batched)."""
    mu, sigma = np.asarray(spec.mu), np.asarray(spec.sigma)
    if spec.kind is Kind.NORMAL:
        return _unwrap(mu + 0 * sigma), _unwrap(sigma ** 2 + 0 * mu)
    nu = np.asarray(spec.nu)
    if spec.kind is Kind.STUDENT_T:
        return _unwrap(mu + 0 * sigma * nu), _unwrap(sigma ** 2 * nu / (nu - 2.0) + 0 * mu)
    xi = np.asarray(spec.xi)
    inv = 1.0 / xi
    lg = special.lgamma(0.5 * (nu + 1.0)) - special.lgamma(0.5 * nu)
    phi = (xi ** 2 - inv ** 2) * 2.0 * nu * np.exp(lg) / ((xi + inv) * (nu - 1.0) * np.sqrt(math.pi * nu))
    gamma = (xi ** 3 + inv ** 3) / (xi + inv) * nu / (nu - 2.0)
    return _unwrap(mu + phi * sigma), _unwrap((gamma - phi ** 2) * sigma ** 2)


def sample(spec: DistributionSpec, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw ``n`` variates from a scalar ``spec``.

    The skewed t is sampled exactly: pick the left half with probability
    ``1 / (1 + xi^2)``, then scale a half-t draw by ``1/xi`` or ``xi``.
    """
    if n < 1:
        raise DomainError("sample requires n >= 1")
    if spec.batched:
        raise DomainError("sample requires scalar parameters")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if spec.kind is Kind.NORMAL:
        z = rng.standard_normal(n)
    elif spec.kind is Kind.STUDENT_T:
        z = rng.standard_t(spec.nu, n)
    else:
        t = np.abs(rng.standard_t(spec.nu, n))
        left = rng.random(n) < 1.0 / (1.0 + spec.xi ** 2)
        z = np.where(left, -t / spec.xi, t * spec.xi)
    return spec.mu + spec.sigma * z


def from_mean_sd(kind: Kind, mean, sd, nu=None, xi=None) -> DistributionSpec:
    """Spec whose mean is ``mean`` and standard deviation is ``sd``.

    This is the standardized-innovation convention of GARCH models: the
    shape parameters are kept and location/scale are solved for.
    """
    kind = Kind(kind)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if kind is Kind.NORMAL:
        return DistributionSpec(kind, mean, sd)
    nu_a = np.asarray(nu, dtype=float)
    if np.any(nu_a <= 2):
        raise DomainError("from_mean_sd requires nu > 2")
    if kind is Kind.STUDENT_T:
        return DistributionSpec(kind, mean, sd * np.sqrt((nu_a - 2.0) / nu_a), nu)
    unit_mean, unit_var = mean_variance(DistributionSpec(kind, 0.0 * sd, 1.0 + 0.0 * sd, nu, xi))
    scale = sd / np.sqrt(unit_var)
    return DistributionSpec(kind, mean - scale * unit_mean, scale, nu, xi)
