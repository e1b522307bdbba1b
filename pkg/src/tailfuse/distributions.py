"""Univariate special functions and samplers.

The scalar routines here (normal quantile, incomplete beta, Student t CDF and
quantile, gamma sampler) are self-contained.  The ``*_fast`` kernels are the
vectorized versions used inside the Monte Carlo engine; they lean on
``scipy.special`` for the bulk t CDF and are checked against the scalar
routines in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

_BETACF_MAXIT = 20000
_BETACF_EPS = 1e-16
_FPMIN = 1e-300


class DomainError(ValueError):
    """Argument outside the domain of a special function or sampler."""


def _check_open_prob(p: float, name: str = "p") -> None:
    if not (0.0 < p < 1.0):
        raise DomainError(f"{name} must lie in the open interval (0, 1), got {p!r}")


# ---------------------------------------------------------------------------
# Normal distribution
# ---------------------------------------------------------------------------

# Acklam's rational approximation, relative error ~1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_cdf(x):
    """Standard normal CDF."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / SQRT2)


def _acklam_lower(p: np.ndarray) -> np.ndarray:
    # valid for 0 < p <= 0.5
    x = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    return x


def norm_quantile(p):
    """Inverse of the standard normal CDF.

    Rational approximation followed by one Halley step on the CDF.  Upper-half
    probabilities are reflected so the refinement always works on the lower
    tail, where ``erfc`` has full relative precision.  Accepts scalars or
    arrays; probabilities of exactly 0 or 1 raise ``DomainError``.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("norm_quantile requires 0 < p < 1")
    upper = arr > 0.5
    q = np.where(upper, 1.0 - arr, arr)
    x = _acklam_lower(np.atleast_1d(q)).reshape(q.shape)
    e = 0.5 * special.erfc(-x / SQRT2) - q
    u = e * SQRT2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    x = np.where(upper, -x, x)
    if np.ndim(p) == 0:
        return float(x)
    return x


# ---------------------------------------------------------------------------
# Incomplete beta and Student t
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _ibeta(a: float, b: float, x: float, y: float) -> float:
    # y = 1 - x, passed separately so callers can supply it without cancellation
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, y) / b


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"reg_inc_beta requires a > 0 and b > 0, got a={a!r}, b={b!r}")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"reg_inc_beta requires 0 <= x <= 1, got {x!r}")
    return _ibeta(float(a), float(b), float(x), 1.0 - float(x))


def _check_df(nu: float) -> None:
    if not nu > 0.0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")


def t_cdf(x: float, nu: float) -> float:
    """Student t CDF with ``nu`` degrees of freedom."""
    _check_df(nu)
    x = float(x)
    if x == 0.0:
        return 0.5
    if math.isinf(x):
        return 0.0 if x < 0 else 1.0
    x2 = x * x
    denom = nu + x2
    tail = 0.5 * _ibeta(0.5 * nu, 0.5, nu / denom, x2 / denom)
    return tail if x < 0 else 1.0 - tail


def t_pdf(x, nu: float):
    """Student t density (vectorized)."""
    _check_df(nu)
    x = np.asarray(x, dtype=float)
    log_k = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
             - 0.5 * math.log(nu * math.pi))
    return np.exp(log_k - 0.5 * (nu + 1.0) * np.log1p(x * x / nu))


def t_quantile(p: float, nu: float) -> float:
    """Student t quantile by bracketed root-finding on :func:`t_cdf`."""
    _check_open_prob(p)
    _check_df(nu)
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -t_quantile(1.0 - p, nu)
    lo = -1.0
    while t_cdf(lo, nu) > p:
        lo *= 2.0
        if not math.isfinite(lo):
            raise ArithmeticError(f"could not bracket the t quantile for p={p}, nu={nu}")
    hi = lo / 2.0 if lo < -1.0 else 0.0
    return optimize.brentq(lambda t: t_cdf(t, nu) - p, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)


# ---------------------------------------------------------------------------
# Vectorized Student t kernels for the Monte Carlo engine
# ---------------------------------------------------------------------------

_TABLE_QMIN = 1e-16
_TABLE_SIZE = 6001


# Beyond this |x| the leading term of the tail series is exact to double
# precision (relative error of order nu / x^2).
_ASYM_X = 1e10
_LOG_ASYM_X = math.log(_ASYM_X)


def _log_tail_const(nu: float) -> float:
    # Pr(T > x) ~ z^(nu/2) / (nu B(nu/2, 1/2)) with z = nu / (nu + x^2)
    return -math.log(nu) - special.betaln(0.5 * nu, 0.5)


def t_sf_fast(x, nu: float) -> np.ndarray:
    """Vectorized upper tail Pr(T > x) of a Student t."""
    x = np.asarray(x, dtype=float)
    out = np.array(special.stdtr(nu, -x), dtype=float)
    far = np.abs(x) > _ASYM_X
    if np.any(far):
        ax = np.abs(x[far])
        with np.errstate(over="ignore"):
            log_z = math.log(nu) - 2.0 * np.log(ax) - np.log1p(nu / ax**2)
        log_tail = 0.5 * nu * log_z + _log_tail_const(nu)
        out[far] = np.where(x[far] > 0, np.exp(log_tail), -np.expm1(log_tail))
    return out


def _log_isf_asym(log_q: np.ndarray, nu: float) -> np.ndarray:
    """log x solving the leading-order tail equation for Pr(T > x) = q."""
    log_z = (log_q - _log_tail_const(nu)) / (0.5 * nu)
    # x^2 = nu (1 - z) / z and z is negligible here
    return 0.5 * (math.log(nu) - log_z)


@lru_cache(maxsize=64)
def _t_isf_table(nu: float):
    logq = np.linspace(math.log(_TABLE_QMIN), math.log(0.5), _TABLE_SIZE)
    q = np.exp(logq)
    log_xa = _log_isf_asym(logq, nu)
    with np.errstate(over="ignore"):
        x = np.where(log_xa > _LOG_ASYM_X, np.exp(log_xa), -special.stdtrit(nu, q))
    # dx/dlog q = -q / f(x)
    dx = -q / t_pdf(x, nu)
    return logq, x, dx


def t_isf_fast(q, nu: float) -> np.ndarray:
    """Vectorized inverse survival function of a Student t, ``x`` with Pr(T > x) = q.

    A cubic Hermite table in log q seeds one Newton step on the exact CDF,
    which brings the result to working precision.  Far tails use the
    leading-order tail series; values below the table range that are not
    that far fall back to ``scipy.special.stdtrit``.  Overflow gives ``inf``.
    """
    q = np.asarray(q, dtype=float)
    if nu == 1.0:
        return 1.0 / np.tan(np.pi * q)
    upper = q > 0.5
    s = np.where(upper, 1.0 - q, q)
    out = np.empty_like(s)
    with np.errstate(divide="ignore"):
        log_xa = _log_isf_asym(np.log(s), nu)
    far = log_xa > _LOG_ASYM_X
    deep = (s < _TABLE_QMIN) & ~far
    body = ~deep & ~far
    if far.any():
        with np.errstate(over="ignore"):
            out[far] = np.exp(log_xa[far])
    if deep.any():
        out[deep] = -special.stdtrit(nu, s[deep])
    if body.any():
        sb = s[body]
        logq, xt, dxt = _t_isf_table(nu)
        v = np.log(sb)
        h = logq[1] - logq[0]
        k = np.clip(((v - logq[0]) / h).astype(np.int64), 0, len(logq) - 2)
        t = (v - logq[k]) / h
        t2 = t * t
        t3 = t2 * t
        x = ((2 * t3 - 3 * t2 + 1) * xt[k] + (t3 - 2 * t2 + t) * h * dxt[k]
             + (-2 * t3 + 3 * t2) * xt[k + 1] + (t3 - t2) * h * dxt[k + 1])
        # Newton on Pr(T > x) = s
        x = x + (special.stdtr(nu, -x) - sb) / t_pdf(x, nu)
        out[body] = x
    return np.where(upper, -out, out)


# ---------------------------------------------------------------------------
# Gamma sampling
# ---------------------------------------------------------------------------

def _marsaglia_tsang(shape: float, rng: np.random.Generator, size: int) -> np.ndarray:
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        m = todo.size
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = 1.0 + c * z
        ok = v > 0.0
        v = np.where(ok, v * v * v, 1.0)
        z2 = z * z
        squeeze = u < 1.0 - 0.0331 * z2 * z2
        with np.errstate(divide="ignore"):
            full = np.log(u) < 0.5 * z2 + d * (1.0 - v + np.log(v))
        accept = ok & (squeeze | full)
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    return out


def gamma_sample(shape: float, rng: np.random.Generator, size=None, log: bool = False):
    """Draw from Gamma(shape, rate 1).

    Squeeze/accept for ``shape >= 1``; smaller shapes are boosted by sampling
    at ``shape + 1`` and multiplying by ``U**(1/shape)``.  With ``log=True``
    the log of the draw is returned, which stays finite for tiny shapes where
    the draw itself underflows.
    """
    if not shape > 0.0:
        raise DomainError(f"gamma shape must be positive, got {shape!r}")
    n = 1 if size is None else int(np.prod(size))
    if shape >= 1.0:
        g = _marsaglia_tsang(shape, rng, n)
        res = np.log(g) if log else g
    else:
        g = _marsaglia_tsang(shape + 1.0, rng, n)
        u = rng.random(n)
        with np.errstate(divide="ignore"):
            logv = np.log(g) + np.log(u) / shape
        res = logv if log else np.exp(logv)
    if size is None:
        return float(res[0])
    return res.reshape(size)


# ---------------------------------------------------------------------------
# Univariate families
# ---------------------------------------------------------------------------

_FAMILIES = ("normal", "student_t", "cauchy", "pareto", "exponential", "gamma", "uniform")


@dataclass(frozen=True)
class UnivariateDist:
    """A named univariate family with CDF, quantile and sampler.

    ``param`` holds nu for student_t, the tail exponent for pareto and the
    shape for gamma; other families ignore it.
    """

    family: str
    param: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        if self.family in ("student_t", "pareto", "gamma"):
            if self.param is None or not self.param > 0:
                raise DomainError(f"{self.family} needs a positive parameter")

    def cdf(self, x):
        f, a = self.family, self.param
        x = np.asarray(x, dtype=float)
        if f == "normal":
            return norm_cdf(x)
        if f == "student_t":
            return np.vectorize(lambda v: t_cdf(v, a), otypes=[float])(x)
        if f == "cauchy":
            return 0.5 + np.arctan(x) / np.pi
        if f == "pareto":
            return np.where(x <= 1.0, 0.0, -np.expm1(-a * np.log(np.maximum(x, 1.0))))
        if f == "exponential":
            return np.where(x <= 0.0, 0.0, -np.expm1(-np.maximum(x, 0.0)))
        if f == "gamma":
            return special.gammainc(a, np.maximum(x, 0.0))
        return np.clip(x, 0.0, 1.0)

    def quantile(self, p):
        f, a = self.family, self.param
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0.0) & (p < 1.0))):
            raise DomainError("quantile requires 0 < p < 1")
        if f == "normal":
            return norm_quantile(p)
        if f == "student_t":
            return np.vectorize(lambda v: t_quantile(v, a), otypes=[float])(p)
        if f == "cauchy":
            return np.tan(np.pi * (p - 0.5))
        if f == "pareto":
            return np.exp(-np.log1p(-p) / a)
        if f == "exponential":
            return -np.log1p(-p)
        if f == "gamma":
            return special.gammaincinv(a, p)
        return p

    def sample(self, rng: np.random.Generator, size=None):
        f, a = self.family, self.param
        if f == "gamma":
            return gamma_sample(a, rng, size)
        if f == "exponential":
            return rng.standard_exponential(size)
        if f == "normal":
            return rng.standard_normal(size)
        if f == "uniform":
            return rng.random(size)
        if f in ("pareto", "cauchy"):
            u = 1.0 - rng.random(size)  # (0, 1]
            if f == "pareto":
                return u ** (-1.0 / a)
            return np.tan(np.pi * (u - 0.5))
        # student_t as a normal scale mixture
        z = rng.standard_normal(size)
        w = 2.0 * gamma_sample(0.5 * a, rng, size)
        return z * np.sqrt(a / w)
