"""Monte Carlo engine for type-I error and power sweeps.

Replications are split into fixed-size chunks.  Chunk ``j`` always draws
from the stream ``seed_stream(seed, j)``, and per-chunk rejection counts are
merged by integer addition, so a sweep is a pure function of
(config, seed, chunk size) whatever the number of worker threads.  Every
transform and the Bonferroni baseline are evaluated on the same draws.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Union

import numpy as np

from .copulas import CopulaModel, model_from_param, model_from_tau, sample_null_pvalues
from .distributions import norm_quantile, t_isf_fast, t_sf_fast
from .transforms import (
    DegenerateThresholdError,
    TailTransform,
    TransformSpec,
    WeightVector,
    make_transform,
    threshold,
    transform_pvalue,
)

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 1 << 16
SPARSE_BETA_W = 1.5
THREADS_ENV = "TAILFUSE_THREADS"


# ---------------------------------------------------------------------------
# Alternatives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Null:
    pass


@dataclass(frozen=True)
class TypeA:
    """Location shift of t statistics: P_i = 1 - t_nu(t_nu^{-1}(1 - P~_i) + mu_i)."""

    mu: tuple
    nu: float = 5.0

    def __post_init__(self):
        if any(m < 0 for m in self.mu):
            raise ValueError("Type-A shifts must be non-negative")


@dataclass(frozen=True)
class TypeB:
    """Power transform P_i = P~_i ** beta_i, so P_i ~ Beta(1/beta_i, 1)."""

    beta: tuple

    def __post_init__(self):
        if any(b < 1 for b in self.beta):
            raise ValueError("Type-B exponents must be >= 1")


AlternativeSpec = Union[Null, TypeA, TypeB]


def signal_vector(strength: float, n: int, layout: str = "dense", fill: float = 0.0) -> tuple:
    """Dense: every coordinate carries ``strength``; sparse: the first two do
    and the rest carry ``fill``."""
    if layout == "dense":
        return (float(strength),) * n
    if layout == "sparse":
        k = min(2, n)
        return (float(strength),) * k + (float(fill),) * (n - k)
    raise ValueError(f"unknown signal layout {layout!r}")


def gen_alternative(p_null, spec: AlternativeSpec) -> np.ndarray:
    """Turn null p-values (last axis = coordinates) into alternative p-values."""
    P = np.asarray(p_null, dtype=float)
    if isinstance(spec, Null):
        return P
    if isinstance(spec, TypeA):
        mu = np.asarray(spec.mu, dtype=float)
        if mu.size != P.shape[-1]:
            raise ValueError("mu does not match the p-value dimension")
        out = P.copy()
        cols = np.flatnonzero(mu > 0)
        if cols.size:
            t = t_isf_fast(P[..., cols], spec.nu)
            out[..., cols] = t_sf_fast(t + mu[cols], spec.nu)
        return out
    if isinstance(spec, TypeB):
        beta = np.asarray(spec.beta, dtype=float)
        if beta.size != P.shape[-1]:
            raise ValueError("beta does not match the p-value dimension")
        return P ** beta
    raise TypeError(f"unknown alternative {spec!r}")


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    z = norm_quantile(0.5 + level / 2.0)
    p = successes / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


def seed_stream(master: int, chunk_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based random stream for one chunk of work.

    Identical (master, chunk_index, stream) give identical draws; ``stream``
    separates independent uses such as calibration pilots.
    """
    ss = np.random.SeedSequence(entropy=int(master) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(stream), int(chunk_index)))
    return np.random.Generator(np.random.Philox(ss))


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
    return os.cpu_count() or 1


def desk_reps(alpha: float) -> int:
    """Default replication count: 10^6, or 4*10^6 below alpha = 5e-3."""
    return 1_000_000 if alpha >= 5e-3 - 1e-15 else 4_000_000


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CopulaCell:
    family: str
    param: float | None
    tau: float | None
    model: CopulaModel


def copula_grid(family: str, n: int, taus=None, params=None, nu: float = 5.0) -> list[CopulaCell]:
    """Grid of copula models indexed by Kendall tau or by raw parameter."""
    cells = []
    if family in ("independence", "comonotone"):
        tau = 0.0 if family == "independence" else 1.0
        return [CopulaCell(family, None, tau, model_from_param(family, None, n, nu))]
    if taus is not None:
        for tau in taus:
            model = model_from_tau(family, float(tau), n, nu)
            param = getattr(model, "theta", None)
            if param is None and hasattr(model, "sigma"):
                param = float(model.sigma.matrix[0, 1]) if n > 1 else 0.0
            if param is None and hasattr(model, "R"):
                param = float(model.R.matrix[0, 1]) if n > 1 else 0.0
            cells.append(CopulaCell(family, param, float(tau), model))
    elif params is not None:
        for p in params:
            cells.append(CopulaCell(family, float(p), None, model_from_param(family, float(p), n, nu)))
    else:
        raise ValueError("copula grid needs taus or params")
    return cells


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    cells: tuple
    transforms: tuple
    alphas: tuple
    reps: dict = field(default_factory=dict)  # alpha -> replications
    seed: int = 0
    chunk: int = DEFAULT_CHUNK
    alternative: AlternativeSpec = Null()
    weights: WeightVector | None = None
    baseline: bool = True
    name: str = "sweep"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.cells:
            raise ValueError("empty copula grid")
        if not self.transforms:
            raise ValueError("no transforms given")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ValueError("alphas must be a non-empty list of values in (0, 1)")
        if self.chunk < 1:
            raise ValueError("chunk size must be positive")
        for a in self.alphas:
            r = self.reps_for(a)
            if r < 1:
                raise ValueError("replications must be >= 1")
        if self.weights is not None and len(self.weights) != self.n:
            raise ValueError("weights do not match n")

    def reps_for(self, alpha: float) -> int:
        return int(self.reps.get(alpha, desk_reps(alpha)))


@dataclass(frozen=True)
class SimResult:
    """One grid cell: copula x transform x alpha."""

    experiment: str
    copula: str
    param: float | None
    tau: float | None
    n: int
    transform: str
    gamma: float
    alpha: float
    reps: int
    rejections: int | None
    estimate: float | None  # scaled type-I error (null) or power
    ci_lo: float | None
    ci_hi: float | None
    bonf_rejections: int | None
    ratio: float | None  # rejections / bonf_rejections
    seed: int
    mode: str = "null"
    skipped: str | None = None

    @property
    def rate(self) -> float:
        return self.rejections / self.reps

    @property
    def bonf_rate(self) -> float:
        return self.bonf_rejections / self.reps

    def std_error(self) -> float:
        """Binomial standard error on the same scale as ``estimate``."""
        p = self.rate
        se = math.sqrt(p * (1 - p) / self.reps)
        return se / self.alpha if self.mode == "null" else se


@dataclass
class CellCounts:
    """Raw merged counts for one copula cell."""

    rejections: np.ndarray  # (transforms, alphas)
    bonferroni: np.ndarray  # (alphas,)
    reps: np.ndarray  # (alphas,)
    drawn: int
    chunks: int


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

def _chunk_counts(model, transforms, thresholds, alphas, limits, weights, alternative,
                  seed, chunk, j, total, baseline, stream):
    rng = seed_stream(seed, j, stream)
    m = min(chunk, total - j * chunk)
    P = gen_alternative(sample_null_pvalues(model, rng, m), alternative)
    n = P.shape[1]
    lim = np.clip(np.asarray(limits) - j * chunk, 0, m)
    rej = np.zeros((len(transforms), len(alphas)), dtype=np.int64)
    for t, F in enumerate(transforms):
        if all(thr is None for thr in thresholds[t]):
            continue
        xbar = np.sum(transform_pvalue(F, P, weights) / n, axis=1)
        for a, thr in enumerate(thresholds[t]):
            if thr is not None:
                rej[t, a] = np.count_nonzero(xbar[:lim[a]] > thr)
    bonf = np.zeros(len(alphas), dtype=np.int64)
    if baseline:
        pb = n * np.min(P / weights, axis=1)
        for a, alpha in enumerate(alphas):
            bonf[a] = np.count_nonzero(pb[:lim[a]] <= alpha)
    return rej, bonf, m


def simulate_cell(model: CopulaModel, transforms, alphas, reps, *, weights=None,
                  alternative: AlternativeSpec = Null(), seed: int = 0, chunk: int = DEFAULT_CHUNK,
                  workers: int | None = None, baseline: bool = True, stream: int = 0) -> CellCounts:
    """Count rejections for one dependence model.

    ``reps`` gives the replication count per alpha; all alphas share the
    leading draws of a single run of ``max(reps)`` replications.
    """
    n = model.n
    transforms = [F if isinstance(F, TailTransform) else make_transform(F) for F in transforms]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    reps = [int(r) for r in reps]
    total = max(reps)
    thresholds = []
    for F in transforms:
        row = []
        for a in alphas:
            try:
                row.append(threshold(F, n, a))
            except DegenerateThresholdError:
                row.append(None)
        thresholds.append(row)
    nchunks = -(-total // chunk)
    workers = default_workers() if workers is None else max(1, int(workers))

    def work(j):
        return _chunk_counts(model, transforms, thresholds, alphas, reps, w, alternative,
                             seed, chunk, j, total, baseline, stream)

    if workers == 1 or nchunks == 1:
        parts = [work(j) for j in range(nchunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, range(nchunks)))
    rej = sum(p[0] for p in parts)
    bonf = sum(p[1] for p in parts)
    drawn = sum(p[2] for p in parts)
    if drawn != total:
        raise RuntimeError(f"replication ledger mismatch: drew {drawn}, expected {total}")
    return CellCounts(rejections=rej, bonferroni=bonf, reps=np.asarray(reps), drawn=drawn, chunks=nchunks)


def _rows_for_cell(config: ExperimentConfig, cell: CopulaCell, counts: CellCounts, mode: str) -> list[SimResult]:
    rows = []
    for t, spec in enumerate(config.transforms):
        F = make_transform(spec)
        for a, alpha in enumerate(config.alphas):
            reps = int(counts.reps[a])
            base = dict(experiment=config.name, copula=cell.family, param=cell.param, tau=cell.tau,
                        n=config.n, transform=spec.family, gamma=F.tail_index, alpha=alpha,
                        reps=reps, seed=config.seed, mode=mode)
            try:
                threshold(F, config.n, alpha)
            except DegenerateThresholdError as exc:
                rows.append(SimResult(rejections=None, estimate=None, ci_lo=None, ci_hi=None,
                                      bonf_rejections=None, ratio=None, skipped=str(exc), **base))
                continue
            k = int(counts.rejections[t, a])
            lo, hi = wilson_ci(k, reps)
            scale = 1.0 / alpha if mode == "null" else 1.0
            bonf = int(counts.bonferroni[a]) if config.baseline else None
            ratio = None
            if bonf is not None:
                ratio = k / bonf if bonf > 0 else (math.inf if k > 0 else math.nan)
            rows.append(SimResult(rejections=k, estimate=k / reps * scale, ci_lo=lo * scale,
                                  ci_hi=hi * scale, bonf_rejections=bonf, ratio=ratio, **base))
    return rows


def iter_sweep(config: ExperimentConfig, mode: str, workers: int | None = None) -> Iterator[SimResult]:
    """Yield result rows cell by cell (copula-major, then transform, then alpha)."""
    if mode == "null" and not isinstance(config.alternative, Null):
        raise ValueError("a null sweep requires the Null alternative")
    if mode == "power" and isinstance(config.alternative, Null):
        raise ValueError("a power sweep requires a Type-A or Type-B alternative")
    reps = [config.reps_for(a) for a in config.alphas]
    for cell in config.cells:
        counts = simulate_cell(cell.model, config.transforms, config.alphas, reps,
                               weights=config.weights, alternative=config.alternative,
                               seed=config.seed, chunk=config.chunk, workers=workers,
                               baseline=config.baseline)
        rows = _rows_for_cell(config, cell, counts, mode)
        for r in rows:
            if r.skipped:
                log.warning("skipped cell %s/%s gamma=%g alpha=%g: %s",
                            r.copula, r.transform, r.gamma, r.alpha, r.skipped)
        yield from rows


def run_null_sweep(config: ExperimentConfig, workers: int | None = None) -> list[SimResult]:
    """Scaled type-I error for every (copula, transform, alpha) cell."""
    return list(iter_sweep(config, "null", workers))


def run_power_sweep(config: ExperimentConfig, workers: int | None = None) -> list[SimResult]:
    """Power, Bonferroni power and their ratio for every cell."""
    return list(iter_sweep(config, "power", workers))


# ---------------------------------------------------------------------------
# Signal calibration
# ---------------------------------------------------------------------------

def calibrate_signal(kind: str, model: CopulaModel, transform, alpha: float, target: float, *,
                     layout: str = "dense", reps: int = 100_000, seed: int = 0, tol: float = 0.01,
                     chunk: int = DEFAULT_CHUNK, workers: int | None = None,
                     beta_w: float = SPARSE_BETA_W, max_iter: int = 60) -> float:
    """Bisect the signal strength so the given test reaches ``target`` power.

    ``kind`` is ``"A"`` (search over mu) or ``"B"`` (search over beta_s).  A
    fixed pilot stream is reused at every step, which makes estimated power
    monotone in the signal strength.
    """
    n = model.n
    F = transform if isinstance(transform, TailTransform) else make_transform(transform)

    def alt(s):
        if kind == "A":
            return TypeA(signal_vector(s, n, layout, 0.0))
        return TypeB(signal_vector(s, n, layout, beta_w))

    def power(s):
        c = simulate_cell(model, [F], [alpha], [reps], alternative=alt(s), seed=seed,
                          chunk=chunk, workers=workers, baseline=False, stream=1)
        return c.rejections[0, 0] / reps

    lo = 0.0 if kind == "A" else 1.0
    p_lo = power(lo)
    if p_lo >= target:
        return lo
    hi = lo + 1.0
    while power(hi) < target:
        hi = lo + 2.0 * (hi - lo)
        if hi > 1e6:
            raise RuntimeError("could not bracket the calibration target")
    mid = hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p = power(mid)
        if abs(p - target) <= tol:
            return mid
        if p < target:
            lo = mid
        else:
            hi = mid
    return mid


def with_alternative(config: ExperimentConfig, alternative: AlternativeSpec) -> ExperimentConfig:
    return replace(config, alternative=alternative)
