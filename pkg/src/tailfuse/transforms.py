"""Heavy-tailed transformations and the combination test built on them.

A p-value vector ``P`` is mapped through the quantile of a regularly varying
distribution ``F`` with tail index gamma, ``X_i = Q_F((1 - P_i / w_i)^+)``,
averaged, and converted back with ``min(1, n**(1 - gamma) * sf(mean X))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import t_isf_fast, t_sf_fast

# Transformed statistics are capped here so that averages stay finite.
XMAX = 1e300

# Beyond this the transforms are pure power laws to double precision, and the
# combined p-value is evaluated in log space.
DEEP_TAIL = 1e200

DEFAULT_TRUNCATION = 0.001

FAMILIES = ("pareto", "cauchy", "truncated_cauchy", "truncated_t")


class TransformError(ValueError):
    """Invalid transformation parameters."""


class DegenerateThresholdError(ValueError):
    """The rejection threshold Q_F(1 - alpha / n**(1 - gamma)) does not exist."""


@dataclass(frozen=True)
class TransformSpec:
    """Family tag plus parameters of a transformation distribution.

    ``gamma`` is used by pareto, ``nu`` by truncated_t and ``q0`` (lower
    truncation probability) by the truncated families.
    """

    family: str
    gamma: float | None = None
    nu: float | None = None
    q0: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise TransformError(f"unknown transform family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "pareto" and not (self.gamma is not None and self.gamma > 0):
            raise TransformError("pareto transform needs gamma > 0")
        if self.family == "truncated_t" and not (self.nu is not None and self.nu > 0):
            raise TransformError("truncated_t transform needs nu > 0")
        if self.family in ("truncated_cauchy", "truncated_t") and not (0.0 <= self.q0 < 1.0):
            raise TransformError(f"truncation probability must satisfy 0 <= q0 < 1, got {self.q0}")

    @property
    def tail_index(self) -> float:
        if self.family == "pareto":
            return float(self.gamma)
        if self.family == "truncated_t":
            return float(self.nu)
        return 1.0

    @property
    def label(self) -> str:
        if self.family == "pareto":
            return f"pareto({self.gamma:g})"
        if self.family == "truncated_t":
            return f"truncated_t({self.nu:g},{self.q0:g})"
        if self.family == "truncated_cauchy":
            return f"truncated_cauchy({self.q0:g})"
        return "cauchy"

    @classmethod
    def parse(cls, text: str) -> "TransformSpec":
        """Parse ``FAMILY[:PARAMS]`` such as ``pareto:1``, ``truncated_t:0.6,0.001``
        or ``truncated_t:nu=0.6,q0=0.001``."""
        family, _, rest = text.strip().partition(":")
        family = family.strip().lower()
        positional: list[float] = []
        named: dict[str, float] = {}
        for tok in filter(None, (t.strip() for t in rest.split(","))):
            key, eq, val = tok.partition("=")
            try:
                if eq:
                    named[key.strip().lower()] = float(val)
                else:
                    positional.append(float(key))
            except ValueError:
                raise TransformError(f"bad transform parameter {tok!r} in {text!r}") from None
        if "trunc_q" in named:
            named["q0"] = named.pop("trunc_q")
        order = {"pareto": ["gamma"], "truncated_t": ["nu", "q0"],
                 "truncated_cauchy": ["q0"], "cauchy": []}.get(family)
        if order is None:
            raise TransformError(f"unknown transform family {family!r}")
        if len(positional) > len(order):
            raise TransformError(f"too many parameters for {family}: {text!r}")
        kwargs = dict(zip(order, positional))
        for k, v in named.items():
            if k not in order:
                raise TransformError(f"{family} does not take parameter {k!r}")
            kwargs[k] = v
        return cls(family, **kwargs)


@dataclass(frozen=True)
class TailTransform:
    """A transformation distribution F with regularly varying right tail.

    All methods are vectorized.  ``isf`` is the workhorse: it maps a small
    tail probability straight to the quantile without forming ``1 - s``.
    """

    spec: TransformSpec

    @property
    def tail_index(self) -> float:
        return self.spec.tail_index

    @property
    def left_bound(self) -> float:
        f = self.spec.family
        if f == "pareto":
            return 1.0
        if f == "cauchy" or self.spec.q0 == 0.0:
            return -math.inf
        return float(-self._parent_isf(np.asarray(self.spec.q0)))

    @property
    def _nu(self) -> float:
        return float(self.spec.nu) if self.spec.family == "truncated_t" else 1.0

    def _parent_isf(self, s):
        return t_isf_fast(s, self._nu)

    def _parent_sf(self, x):
        if self._nu == 1.0:
            return np.arctan2(1.0, x) / np.pi
        return t_sf_fast(x, self._nu)

    def sf(self, x):
        """Survival function 1 - F(x)."""
        x = np.asarray(x, dtype=float)
        f = self.spec.family
        if f == "pareto":
            with np.errstate(divide="ignore"):
                return np.where(x <= 1.0, 1.0, np.power(np.maximum(x, 1.0), -self.spec.gamma))
        if f == "cauchy":
            return np.arctan2(1.0, x) / np.pi
        keep = 1.0 - self.spec.q0
        return np.minimum(self._parent_sf(x) / keep, 1.0)

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def isf(self, s):
        """Inverse survival: the x with sf(x) = s, for s in (0, 1]."""
        s = np.asarray(s, dtype=float)
        f = self.spec.family
        with np.errstate(divide="ignore", over="ignore"):
            if f == "pareto":
                out = np.power(s, -1.0 / self.spec.gamma)
            elif f == "cauchy":
                out = 1.0 / np.tan(np.pi * s)
            else:
                out = self._parent_isf(s * (1.0 - self.spec.q0))
        return out

    def quantile(self, u):
        """Q_F(u) for u in [0, 1); Q_F(0) is the left bound."""
        u = np.asarray(u, dtype=float)
        out = self.isf(1.0 - u)
        return np.where(u <= 0.0, self.left_bound, out)


def make_transform(spec: TransformSpec | str) -> TailTransform:
    """Build a :class:`TailTransform` from a spec or a ``FAMILY:PARAMS`` string."""
    if isinstance(spec, str):
        spec = TransformSpec.parse(spec)
    return TailTransform(spec)


class WeightVector:
    """Positive weights renormalized on construction to sum to their length."""

    __slots__ = ("values",)

    def __init__(self, weights=None, n: int | None = None):
        if weights is None:
            if n is None:
                raise ValueError("either weights or n is required")
            w = np.ones(n)
        else:
            w = np.array(weights, dtype=float).reshape(-1)
        if w.size == 0 or np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        if n is not None and w.size != n:
            raise ValueError(f"expected {n} weights, got {w.size}")
        total = w.sum()
        if abs(total - w.size) > 1e-6:
            warnings.warn(f"weights sum to {total:g}, renormalizing to {w.size}", stacklevel=2)
        w = w * (w.size / total)
        w.setflags(write=False)
        self.values = w

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size

    def __iter__(self):
        return iter(self.values)

    def __repr__(self) -> str:
        return f"WeightVector({self.values.tolist()!r})"


def _as_weights(omega, n: int) -> np.ndarray:
    if omega is None:
        return np.ones(n)
    if isinstance(omega, WeightVector):
        if len(omega) != n:
            raise ValueError(f"dimension mismatch: {n} p-values but {len(omega)} weights")
        return omega.values
    if np.ndim(omega) == 0:
        return np.full(n, float(omega))
    w = np.asarray(omega, dtype=float)
    if w.size != n:
        raise ValueError(f"dimension mismatch: {n} p-values but {w.size} weights")
    return WeightVector(w).values


def _check_pvalues(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim == 0:
        P = P.reshape(1)
    if np.any(~((P >= 0.0) & (P <= 1.0))):
        raise ValueError("p-values must lie in [0, 1]")
    return P


def transform_pvalue(F: TailTransform, p, omega=1.0):
    """X = Q_F((1 - p / omega)^+), saturated at :data:`XMAX` when p = 0."""
    p = np.asarray(p, dtype=float)
    ratio = np.minimum(p / omega, 1.0)
    with np.errstate(divide="ignore"):
        x = np.where(ratio >= 1.0, F.left_bound, F.isf(np.where(ratio > 0, ratio, 1.0)))
    x = np.where(ratio <= 0.0, XMAX, x)
    x = np.minimum(x, XMAX)
    return float(x) if x.ndim == 0 else x


def statistic(F: TailTransform, P, omega=None) -> np.ndarray | float:
    """Average transformed statistic over the last axis of ``P``."""
    P = _check_pvalues(P)
    n = P.shape[-1]
    w = _as_weights(omega, n)
    x = transform_pvalue(F, P, w)
    xbar = np.sum(np.asarray(x) / n, axis=-1)
    return float(xbar) if np.ndim(xbar) == 0 else xbar


def combined_pvalue(F: TailTransform, P, omega=None):
    """Combined p-value ``min(1, n**(1-gamma) * sf(mean X))``.

    Works on a single vector or on a stack of vectors (last axis).  Rows
    containing an exact zero return the limit 0.
    """
    P = _check_pvalues(P)
    n = P.shape[-1]
    w = _as_weights(omega, n)
    x = np.asarray(transform_pvalue(F, P, w))
    xbar = np.sum(x / n, axis=-1)
    g = F.tail_index
    pc = np.minimum(1.0, n ** (1.0 - g) * F.sf(xbar))
    deep = np.any(x > DEEP_TAIL, axis=-1)
    if np.any(deep):
        # sf(x) ~ K x^-g makes the constant K cancel: P = n (sum_i s_i^(-1/g))^(-g)
        with np.errstate(divide="ignore"):
            log_s = np.log(np.minimum(P / w, 1.0))
        log_total = special.logsumexp(-log_s / g, axis=-1)
        pc = np.where(deep, np.minimum(1.0, n * np.exp(-g * log_total)), pc)
    pc = np.where(np.any(P == 0.0, axis=-1), 0.0, pc)
    return float(pc) if pc.ndim == 0 else pc


def threshold(F: TailTransform, n: int, alpha: float) -> float:
    """Rejection threshold Q_F(1 - alpha / n**(1 - gamma))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    level = alpha / n ** (1.0 - F.tail_index)
    if level >= 1.0:
        raise DegenerateThresholdError(
            f"alpha / n^(1-gamma) = {level:g} >= 1 for n={n}, gamma={F.tail_index:g}, alpha={alpha:g}")
    return float(F.isf(level))


def reject(F: TailTransform, P, omega=None, alpha: float = 0.05):
    """Decision of the combination test: mean X exceeds the threshold."""
    P = _check_pvalues(P)
    thr = threshold(F, P.shape[-1], alpha)
    xbar = statistic(F, P, omega)
    out = np.asarray(xbar) > thr
    return bool(out) if out.ndim == 0 else out


def bonferroni_pvalue(P, omega=None):
    """Weighted Bonferroni combined p-value ``min(1, n * min_i P_i / w_i)``."""
    P = _check_pvalues(P)
    n = P.shape[-1]
    w = _as_weights(omega, n)
    pb = np.minimum(1.0, n * np.min(P / w, axis=-1))
    return float(pb) if np.ndim(pb) == 0 else pb
