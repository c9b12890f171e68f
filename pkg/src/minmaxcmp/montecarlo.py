"""Monte Carlo estimators, Kolmogorov distance and anti-concentration.

Anything with a ``draw(rng, size) -> (size, n, m)`` method can be sampled
here; Gaussian specs, quadratic-form specs and the lead-lag matrix all
provide one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .covlab import (
    DomainError,
    GaussianMatrixSpec,
    MatrixShape,
    SeedSpec,
    _draw,
    as_seed,
    map_blocks,
)
from .softminmax import min_sum_topk

KS_CONST = 1.36


class MatrixSampler(Protocol):
    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray: ...


class _GaussianSampler:
    def __init__(self, spec: GaussianMatrixSpec):
        spec.cholesky()
        self.spec = spec

    def draw(self, rng, size):
        return _draw(self.spec, rng, size)


def as_sampler(source) -> MatrixSampler:
    if isinstance(source, GaussianMatrixSpec):
        return _GaussianSampler(source)
    if hasattr(source, "draw"):
        return source
    raise DomainError(f"cannot sample from {type(source).__name__}")


@dataclass(frozen=True)
class SampleStats:
    count: int
    mean: float
    stderr: float
    min: float
    max: float

    @classmethod
    def from_values(cls, values) -> "SampleStats":
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.size == 0:
            raise DomainError("no values")
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size >= 2 else math.nan
        return cls(int(v.size), float(v.mean()), se, float(v.min()), float(v.max()))

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean, "stderr": self.stderr, "min": self.min, "max": self.max}


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Sorted sample values plus the seed that produced them."""

    values: np.ndarray
    seed: SeedSpec | None = None

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).reshape(-1))
        if v.size == 0:
            raise DomainError("empirical sample must be nonempty")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def statistic_values(
    source, stat: Callable[[np.ndarray], np.ndarray], reps: int, seed: SeedSpec | int, threads: int | None = None
) -> np.ndarray:
    """Evaluate ``stat`` on ``reps`` sampled matrices, in replication order."""
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    sampler = as_sampler(source)
    parts = map_blocks(lambda rng, size: np.asarray(stat(sampler.draw(rng, size))), reps, seed, threads=threads)
    return np.concatenate(parts)


def estimate_min_sum_topk(source, k: int, reps: int, seed: SeedSpec | int, threads: int | None = None) -> SampleStats:
    """Monte Carlo mean of the min over rows of top-``k`` row sums."""
    vals = statistic_values(source, lambda x: min_sum_topk(x, k), reps, seed, threads)
    return SampleStats.from_values(vals)


def minmax_sample(source, reps: int, seed: SeedSpec | int, threads: int | None = None) -> EmpiricalSample:
    vals = statistic_values(source, lambda x: min_sum_topk(x, 1), reps, seed, threads)
    return EmpiricalSample(vals, as_seed(seed))


def _values(s) -> np.ndarray:
    if isinstance(s, EmpiricalSample):
        return s.values
    v = np.sort(np.asarray(s, dtype=float).reshape(-1))
    if v.size == 0:
        raise DomainError("empirical sample must be nonempty")
    return v


def ks_distance(a, b) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic.

    Both empirical CDFs are evaluated right-continuously at every observed
    value, so tied values are absorbed before the gap is measured.
    """
    x, y = _values(a), _values(b)
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def ks_noise(na: int, nb: int | None = None) -> float:
    """95% two-sample KS critical value (one-sample DKW-type if ``nb`` is None)."""
    if nb is None:
        return KS_CONST / math.sqrt(na)
    return KS_CONST * math.sqrt((na + nb) / (na * nb))


def levy_concentration(sample, eps: float) -> float:
    """``sup_x`` of the empirical ``P(|Y - x| <= eps)``.

    The supremum is attained by a closed window of width ``2 eps`` whose left
    end sits on a data point.
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    v = _values(sample)
    right = np.searchsorted(v, v + 2.0 * eps, side="right")
    left = np.searchsorted(v, v, side="left")
    return float(np.max(right - left) / v.size)


def sharpness_columns_spec(n: int, m: int) -> GaussianMatrixSpec:
    """``m`` identical columns, each a copy of one standard ``n``-vector."""
    if n < 1 or m < 1:
        raise DomainError(f"need n, m >= 1, got ({n}, {m})")
    rows = np.repeat(np.arange(n), m)
    cov = (rows[:, None] == rows[None, :]).astype(float)
    return GaussianMatrixSpec(MatrixShape(n, m), np.zeros(n * m), cov)


def sharpness_rows_spec(n: int, m: int, k: int) -> GaussianMatrixSpec:
    """``n`` identical rows, each ``k`` copies of one standard ``(m/k)``-vector."""
    if n < 1 or not 1 <= k <= m:
        raise DomainError(f"need n >= 1 and 1 <= k <= m, got n={n}, m={m}, k={k}")
    if m % k:
        raise DomainError(f"m={m} must be divisible by k={k}")
    mt = m // k
    src = np.tile(np.arange(m) % mt, n)
    cov = (src[:, None] == src[None, :]).astype(float)
    return GaussianMatrixSpec(MatrixShape(n, m), np.zeros(n * m), cov)


def assumption_A_check(source, reps: int, seed: SeedSpec | int, tol: float = 1e-9) -> bool:
    """False when some sample attains its min-max at two entries (within ``tol``)."""

    def ties(x):
        mm = x.max(axis=-1).min(axis=-1)
        hits = np.abs(x - mm[:, None, None]) <= tol
        return hits.reshape(hits.shape[0], -1).sum(axis=1)

    counts = statistic_values(source, ties, reps, seed)
    return bool(np.all(counts == 1))


def order_statistics(x) -> np.ndarray:
    """Ascending order statistics along the last axis."""
    return np.sort(np.asarray(x, dtype=float), axis=-1)
