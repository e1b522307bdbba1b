"""Dependence models for null p-value vectors.

Every model samples a matrix of p-values with standard uniform marginals
whose complement ``1 - P`` carries the model's copula.  The p-values are
produced directly (never as ``1 - U``) so small values keep full precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats

from .distributions import DomainError, gamma_sample, norm_cdf, t_sf_fast


class CopulaModelError(ValueError):
    """Invalid copula parameters or a failed matrix factorization."""


class UnsupportedCopulaError(NotImplementedError):
    """No closed-form CDF is available for this model."""


def cholesky(R) -> np.ndarray:
    """Lower-triangular L with L @ L.T == R.

    Raises :class:`CopulaModelError` naming the first non-positive pivot.
    """
    A = np.array(R, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise CopulaModelError("correlation matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise CopulaModelError("correlation matrix must be symmetric")
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > 1e-14:
            raise CopulaModelError(f"matrix is not positive definite: pivot {j} equals {pivot:.3g}")
        L[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """A unit-diagonal correlation matrix with its cached Cholesky factor."""

    matrix: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise CopulaModelError("correlation matrix must be square")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12, rtol=0):
            raise CopulaModelError("correlation matrix must have a unit diagonal")
        m.setflags(write=False)
        L = cholesky(m)
        L.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "factor", L)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def equicorrelation(cls, n: int, rho: float) -> "CorrelationMatrix":
        m = np.full((n, n), float(rho))
        np.fill_diagonal(m, 1.0)
        return cls(m)


@dataclass(frozen=True)
class Independence:
    n: int


@dataclass(frozen=True)
class Comonotone:
    n: int


@dataclass(frozen=True)
class Gaussian:
    R: CorrelationMatrix

    @property
    def n(self) -> int:
        return self.R.n


@dataclass(frozen=True)
class StudentT:
    nu: float
    sigma: CorrelationMatrix

    def __post_init__(self):
        if not self.nu > 0:
            raise CopulaModelError("t copula needs nu > 0")

    @property
    def n(self) -> int:
        return self.sigma.n


@dataclass(frozen=True)
class SurvClaytonForComplement:
    """P follows a Clayton copula, so 1 - P follows the survival Clayton."""

    theta: float
    n: int

    def __post_init__(self):
        if not self.theta > 0:
            raise CopulaModelError("Clayton needs theta > 0")


@dataclass(frozen=True)
class Mixture:
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0 or w.size != len(self.components):
            raise CopulaModelError("mixture needs one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise CopulaModelError("mixture weights must be positive and sum to 1")
        if len({c.n for c in self.components}) != 1:
            raise CopulaModelError("mixture components must share a dimension")

    @property
    def n(self) -> int:
        return self.components[0].n


CopulaModel = Union[Independence, Comonotone, Gaussian, StudentT, SurvClaytonForComplement, Mixture]


def dependence_from_tau(family: str, tau: float) -> float:
    """Copula parameter matching a pairwise Kendall tau.

    clayton: theta = 2 tau / (1 - tau); student_t and gaussian: rho = sin(pi tau / 2).
    """
    if not 0.0 < tau < 1.0:
        raise DomainError(f"Kendall tau must lie in (0, 1), got {tau}")
    if family == "clayton":
        return 2.0 * tau / (1.0 - tau)
    if family in ("student_t", "gaussian"):
        return math.sin(math.pi * tau / 2.0)
    raise CopulaModelError(f"unknown copula family {family!r}")


def model_from_tau(family: str, tau: float, n: int, nu: float = 5.0) -> CopulaModel:
    """Build a model from a Kendall tau; tau 0 and 1 map to the exact
    independence and comonotone models."""
    if family == "independence" or tau == 0.0:
        return Independence(n)
    if family == "comonotone" or tau == 1.0:
        return Comonotone(n)
    return model_from_param(family, dependence_from_tau(family, tau), n, nu)


def model_from_param(family: str, param: float | None, n: int, nu: float = 5.0) -> CopulaModel:
    if family == "independence":
        return Independence(n)
    if family == "comonotone":
        return Comonotone(n)
    if family == "clayton":
        return SurvClaytonForComplement(float(param), n)
    if family == "gaussian":
        return Gaussian(CorrelationMatrix.equicorrelation(n, param))
    if family == "student_t":
        return StudentT(float(nu), CorrelationMatrix.equicorrelation(n, param))
    raise CopulaModelError(f"unknown copula family {family!r}")


def _uniform_open(rng: np.random.Generator, shape) -> np.ndarray:
    # (0, 1]
    return 1.0 - rng.random(shape)


def sample_null_pvalues(model: CopulaModel, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw null p-value vectors; shape ``(n,)`` or ``(size, n)``."""
    m = 1 if size is None else int(size)
    n = model.n
    if isinstance(model, Independence):
        P = _uniform_open(rng, (m, n))
    elif isinstance(model, Comonotone):
        u = _uniform_open(rng, m)
        P = np.repeat(u[:, None], n, axis=1)
    elif isinstance(model, Gaussian):
        Z = rng.standard_normal((m, n)) @ model.R.factor.T
        P = norm_cdf(-Z)
    elif isinstance(model, StudentT):
        Z = rng.standard_normal((m, n)) @ model.sigma.factor.T
        W = 2.0 * gamma_sample(0.5 * model.nu, rng, m)
        P = t_sf_fast(Z * np.sqrt(model.nu / W)[:, None], model.nu)
    elif isinstance(model, SurvClaytonForComplement):
        # Marshall-Olkin frailty: U_i = (1 + E_i / V)^(-1/theta), V ~ Gamma(1/theta)
        log_v = gamma_sample(1.0 / model.theta, rng, m, log=True)
        log_e = np.log(rng.standard_exponential((m, n)))
        P = np.exp(-np.logaddexp(0.0, log_e - log_v[:, None]) / model.theta)
    elif isinstance(model, Mixture):
        idx = rng.choice(len(model.components), size=m, p=np.asarray(model.weights, dtype=float))
        P = np.empty((m, n))
        for k, comp in enumerate(model.components):
            rows = np.flatnonzero(idx == k)
            if rows.size:
                P[rows] = sample_null_pvalues(comp, rng, rows.size)
    else:
        raise CopulaModelError(f"unsupported model {model!r}")
    return P[0] if size is None else P


def copula_cdf(model: CopulaModel, u) -> float:
    """Joint CDF of the sampled p-value vector at ``u``.

    Closed forms exist for independence (product), comonotone (minimum),
    Clayton and mixtures of these.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise DomainError("copula arguments must lie in [0, 1]")
    if isinstance(model, Independence):
        return float(np.prod(u))
    if isinstance(model, Comonotone):
        return float(np.min(u))
    if isinstance(model, SurvClaytonForComplement):
        if np.any(u == 0):
            return 0.0
        th = model.theta
        with np.errstate(over="ignore"):
            s = np.sum(u ** (-th)) - (u.size - 1)
        return float(s ** (-1.0 / th))
    if isinstance(model, Mixture):
        return float(sum(w * copula_cdf(c, u) for w, c in zip(model.weights, model.components)))
    raise UnsupportedCopulaError(f"no analytic CDF for {type(model).__name__}")


def kendall_tau(x, y, max_points: int | None = 20000) -> float:
    """Empirical Kendall tau on at most ``max_points`` leading observations."""
    x = np.asarray(x)
    y = np.asarray(y)
    if max_points is not None:
        x, y = x[:max_points], y[:max_points]
    return float(stats.kendalltau(x, y).statistic)


def mean_pairwise_tau(P, max_points: int | None = 20000) -> float:
    """Average empirical Kendall tau over all coordinate pairs of ``P``."""
    P = np.asarray(P)
    n = P.shape[1]
    taus = [kendall_tau(P[:, i], P[:, j], max_points) for i in range(n) for j in range(i + 1, n)]
    return float(np.mean(taus))
