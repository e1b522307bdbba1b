"""Closed-form tail quantities of MRV copulas.

Stable tail dependence functions ``ell``, their extreme value copulas,
discrete spectral measures on the unit simplex, limiting scaled type-I
errors of the combination test, Bonferroni ratios and the bivariate convex
order check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .transforms import WeightVector, _as_weights

MOMENT_TOL = 1e-9
SIMPLEX_TOL = 1e-12


class SpectralMeasureError(ValueError):
    """A spectral measure violates the simplex or moment constraints."""


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Finitely supported measure on the unit simplex.

    ``atoms`` has shape (K, n), each row non-negative and summing to one;
    ``masses`` has shape (K,).  Construction only checks the simplex; the
    moment constraint is reported by :func:`validate_spectral`.
    """

    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.array(self.atoms, dtype=float))
        masses = np.atleast_1d(np.array(self.masses, dtype=float))
        if atoms.shape[0] != masses.size:
            raise SpectralMeasureError(f"{atoms.shape[0]} atoms but {masses.size} masses")
        if np.any(masses <= 0):
            raise SpectralMeasureError("masses must be positive")
        if np.any(atoms < 0):
            raise SpectralMeasureError("atoms must be non-negative")
        bad = np.flatnonzero(np.abs(atoms.sum(axis=1) - 1.0) > SIMPLEX_TOL)
        if bad.size:
            raise SpectralMeasureError(f"atom {int(bad[0])} is off the simplex (sums to {atoms[bad[0]].sum()!r})")
        atoms.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def independence(cls, n: int) -> "SpectralMeasure":
        return cls(np.eye(n), np.ones(n))

    @classmethod
    def comonotone(cls, n: int) -> "SpectralMeasure":
        return cls(np.full((1, n), 1.0 / n), [float(n)])

    @classmethod
    def mixture(cls, weights, measures) -> "SpectralMeasure":
        """Spectral measure of a finite copula mixture (masses scale by weight)."""
        atoms = np.vstack([m.atoms for m in measures])
        masses = np.concatenate([w * m.masses for w, m in zip(weights, measures)])
        return cls(atoms, masses)

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralMeasure":
        return cls(data["atoms"], data["masses"])

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "masses": self.masses.tolist()}


@dataclass(frozen=True)
class SpectralDiagnostics:
    moments: np.ndarray
    passed: bool
    total_mass: float
    kind: str  # "independence", "comonotone" or "mixed"
    max_deviation: float = field(default=0.0)

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "fail"
        mom = ", ".join(f"{m:.9g}" for m in self.moments)
        return (f"{verdict}: moments [{mom}] (max deviation {self.max_deviation:.3g}), "
                f"total mass {self.total_mass:.9g}, {self.kind}-type")


def validate_spectral(H: SpectralMeasure) -> SpectralDiagnostics:
    """Check the moment constraint sum_k m_k theta_i^(k) = 1 for every i."""
    moments = H.masses @ H.atoms
    dev = float(np.max(np.abs(moments - 1.0)))
    n = H.n
    basis = np.all(np.isclose(H.atoms.max(axis=1), 1.0, atol=SIMPLEX_TOL, rtol=0))
    center = np.all(np.abs(H.atoms - 1.0 / n) <= SIMPLEX_TOL)
    if basis and n > 1:
        kind = "independence"
    elif center:
        kind = "comonotone"
    else:
        kind = "mixed"
    return SpectralDiagnostics(moments=moments, passed=dev <= MOMENT_TOL,
                               total_mass=float(H.masses.sum()), kind=kind, max_deviation=dev)


def _require_valid(H: SpectralMeasure) -> None:
    diag = validate_spectral(H)
    if not diag.passed:
        raise SpectralMeasureError(f"invalid spectral measure: {diag}")


# ---------------------------------------------------------------------------
# Stable tail dependence functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndependenceEll:
    n: int


@dataclass(frozen=True)
class ComonotoneEll:
    n: int


@dataclass(frozen=True)
class Logistic:
    alpha: float
    n: int

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("logistic model needs 0 < alpha <= 1")


@dataclass(frozen=True)
class GumbelBiv:
    """Asymmetric bivariate Gumbel (logistic) model, theta >= 1, a, b in [0, 1]."""

    theta: float
    a: float = 1.0
    b: float = 1.0
    n: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.theta >= 1.0 or not (0 <= self.a <= 1 and 0 <= self.b <= 1):
            raise ValueError("Gumbel model needs theta >= 1 and a, b in [0, 1]")


@dataclass(frozen=True)
class GalambosBiv:
    """Asymmetric bivariate Galambos (negative logistic) model, theta > 0."""

    theta: float
    a: float = 1.0
    b: float = 1.0
    n: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.theta > 0.0 or not (0 <= self.a <= 1 and 0 <= self.b <= 1):
            raise ValueError("Galambos model needs theta > 0 and a, b in [0, 1]")


@dataclass(frozen=True)
class FromSpectral:
    H: SpectralMeasure

    @property
    def n(self) -> int:
        return self.H.n


EllSpec = Union[IndependenceEll, ComonotoneEll, Logistic, GumbelBiv, GalambosBiv, FromSpectral]


def _power_sum(x: np.ndarray, p: float) -> float:
    """(sum x_i**p)**(1/p) with rescaling against overflow."""
    top = x.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((x / top) ** p) ** (1.0 / p))


def ell_eval(spec: EllSpec, v) -> float:
    """Stable tail dependence function at a non-negative vector ``v``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("ell is defined for finite non-negative vectors only")
    if v.size != spec.n:
        raise ValueError(f"expected a vector of length {spec.n}, got {v.size}")
    if isinstance(spec, IndependenceEll):
        return float(v.sum())
    if isinstance(spec, ComonotoneEll):
        return float(v.max())
    if isinstance(spec, Logistic):
        return _power_sum(v, 1.0 / spec.alpha)
    if isinstance(spec, GumbelBiv):
        x = np.array([spec.a * v[0], spec.b * v[1]])
        return float((1 - spec.a) * v[0] + (1 - spec.b) * v[1] + _power_sum(x, spec.theta))
    if isinstance(spec, GalambosBiv):
        x = np.array([spec.a * v[0], spec.b * v[1]])
        if np.any(x == 0):
            dep = 0.0
        else:
            # (sum x_i^-theta)^(-1/theta), rescaled by min(x) so 1/x cannot overflow
            m = x.min()
            dep = float(m * np.sum((m / x) ** spec.theta) ** (-1.0 / spec.theta))
        return float(v.sum() - dep)
    if isinstance(spec, FromSpectral):
        return float(spec.H.masses @ np.max(spec.H.atoms * v, axis=1))
    raise TypeError(f"unknown ell spec {spec!r}")


def cstar_eval(spec: EllSpec, u) -> float:
    """Extreme value copula exp(-ell(-log u))."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if np.any(u > 1) or np.any(u < 0):
        raise ValueError("copula arguments must lie in [0, 1]")
    if np.any(u == 0):
        return 0.0
    return math.exp(-ell_eval(spec, -np.log(u)))


# ---------------------------------------------------------------------------
# Limits of the combination test
# ---------------------------------------------------------------------------

def _atom_norms(atoms: np.ndarray, c: np.ndarray, gamma: float) -> np.ndarray:
    # (sum_i (c_i theta_i)^(1/gamma))^gamma per atom
    return np.array([_power_sum(row, 1.0 / gamma) for row in atoms * c])


def q_bound(gamma: float, omega=None, n: int | None = None) -> float:
    """Limiting scaled type-I error under complete dependence, (1/n)(sum w^(1/gamma))^gamma."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if omega is None:
        if n is None:
            raise ValueError("need weights or n")
        w = np.ones(n)
    else:
        w = np.asarray(omega if isinstance(omega, WeightVector) else WeightVector(omega), dtype=float)
    return _power_sum(w, 1.0 / gamma) / w.size


def q_gamma_spectral(gamma: float, H: SpectralMeasure, omega=None) -> float:
    """Limiting scaled type-I error q(gamma) for spectral measure ``H``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _require_valid(H)
    w = _as_weights(omega, H.n)
    return float(H.masses @ _atom_norms(H.atoms, w, gamma)) / H.n


def h_tail_ratio(gamma: float, H: SpectralMeasure, c=None) -> float:
    """Limit of Pr(mean X > t) / ((1/n) sum Pr(X_i > t)) for an MRV vector."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _require_valid(H)
    n = H.n
    c = np.ones(n) if c is None else np.asarray(c, dtype=float).reshape(-1)
    if c.size != n or np.any(c < 0):
        raise ValueError("c must be a non-negative vector matching the dimension")
    if not np.any(c > 0):
        raise ValueError("c must have a positive component")
    integral = float(H.masses @ _atom_norms(H.atoms, c, gamma))
    return n ** (1.0 - gamma) * integral / float(c.sum())


def bonferroni_ratio(spec: EllSpec, omega=None) -> float:
    """Limiting type-I error ratio of the gamma = 1 combination test over
    weighted Bonferroni, n / ell(omega)."""
    w = _as_weights(omega, spec.n)
    return spec.n / ell_eval(spec, w)


def power_ratio(spec: EllSpec, c) -> float:
    """Asymptotic power ratio sum(c) / ell(c) of the gamma = 1 test over Bonferroni."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("c must be strictly positive")
    return float(c.sum()) / ell_eval(spec, c)


# ---------------------------------------------------------------------------
# Convex order in two dimensions
# ---------------------------------------------------------------------------

def _stop_loss(H: SpectralMeasure, x: np.ndarray) -> np.ndarray:
    # integral_0^x H(theta_1 <= t) dt = sum_k m_k (x - theta_1^(k))^+
    return np.maximum(x[:, None] - H.atoms[:, 0][None, :], 0.0) @ H.masses


def convex_order_bivariate(H1: SpectralMeasure, H2: SpectralMeasure, tol: float = 1e-12) -> str:
    """Compare two bivariate spectral measures in convex order.

    Returns ``"H1>=H2"`` when H1 dominates H2 in convex order (H1 is more
    spread out, i.e. less asymptotically dependent), ``"H2>=H1"`` for the
    reverse, ``"equal"`` or ``"incomparable"``.  Both integrated first
    marginals are piecewise linear with kinks at the atoms, so comparing
    them at the pooled atom locations is exact.
    """
    for H in (H1, H2):
        if H.n != 2:
            raise ValueError("convex order comparison is implemented for n = 2 only")
        _require_valid(H)
    grid = np.unique(np.concatenate([[0.0, 1.0], H1.atoms[:, 0], H2.atoms[:, 0]]))
    d = _stop_loss(H1, grid) - _stop_loss(H2, grid)
    ge = np.all(d >= -tol)
    le = np.all(d <= tol)
    if ge and le:
        return "equal"
    if ge:
        return "H1>=H2"
    if le:
        return "H2>=H1"
    return "incomparable"
