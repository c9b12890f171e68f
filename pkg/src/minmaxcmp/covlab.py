"""Gaussian random matrix laws: covariance model, PSD factorization, sampling.

Entries of an ``n x m`` matrix are addressed through one flat row-major index
``idx(i1, i2) = i1 * m + i2`` (zero based).  Every module in the package uses
this map, so covariance matrices are always ``nm x nm`` in that order.

Sampling is organised in fixed-size replication blocks.  Block ``b`` of a run
seeded with ``SeedSpec(root, stream)`` draws from
``SeedSequence(root, spawn_key=(stream, b))``; the block layout does not depend
on the number of worker threads, so results are bit-identical for any
``threads`` setting.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

PSD_TOL = 1e-10
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
INCREMENT_CLAMP = 1e-12
BLOCK_SIZE = 4096

T = TypeVar("T")

_threads: int = os.cpu_count() or 1


class DomainError(ValueError):
    """Invalid argument for a mathematical operation (shape, range, index)."""


class NotPSDError(DomainError):
    """Covariance matrix is indefinite beyond the jitter ladder."""

    def __init__(self, message: str, min_pivot: float):
        super().__init__(f"{message} (most negative pivot {min_pivot:.3e})")
        self.min_pivot = min_pivot


# ---------------------------------------------------------------------------
# threading / seeding


def set_threads(n: int | None) -> None:
    """Set the worker count used by block-parallel Monte Carlo loops."""
    global _threads
    _threads = max(1, int(n)) if n else (os.cpu_count() or 1)


def get_threads() -> int:
    return _threads


@dataclass(frozen=True)
class SeedSpec:
    """Root seed plus stream id; distinct pairs give independent generators."""

    root: int
    stream: int = 0

    def __post_init__(self):
        for name in ("root", "stream"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def child(self, stream: int) -> "SeedSpec":
        """Derived seed for a sub-experiment (mixes the current stream in)."""
        ss = np.random.SeedSequence(self.root, spawn_key=(self.stream, 2**32 + int(stream)))
        return SeedSpec(int(ss.generate_state(2, np.uint64)[0]), int(stream))

    def rng(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root, spawn_key=(self.stream, int(block)))
        return np.random.Generator(np.random.PCG64(ss))


def as_seed(seed: SeedSpec | int) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def block_sizes(reps: int, block: int = BLOCK_SIZE) -> list[int]:
    if reps < 0:
        raise DomainError(f"reps must be nonnegative, got {reps}")
    full, rest = divmod(reps, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[np.random.Generator, int], T],
    reps: int,
    seed: SeedSpec | int,
    block: int = BLOCK_SIZE,
    threads: int | None = None,
) -> list[T]:
    """Apply ``fn(rng, size)`` to every replication block, in block order.

    Each block gets its own generator derived from ``seed`` and the block
    index, so the output is independent of ``threads``.
    """
    seed = as_seed(seed)
    sizes = block_sizes(reps, block)
    threads = threads or _threads

    def run(b: int) -> T:
        return fn(seed.rng(b), sizes[b])

    if threads <= 1 or len(sizes) <= 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(sizes))))


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class MatrixShape:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise DomainError(f"shape must have n, m >= 1, got ({self.n}, {self.m})")

    @property
    def size(self) -> int:
        return self.n * self.m

    def idx(self, i1: int, i2: int) -> int:
        if not (0 <= i1 < self.n and 0 <= i2 < self.m):
            raise DomainError(f"entry ({i1}, {i2}) outside {self.n}x{self.m}")
        return i1 * self.m + i2

    def pair(self, a: int) -> tuple[int, int]:
        if not 0 <= a < self.size:
            raise DomainError(f"flat index {a} outside 0..{self.size - 1}")
        return divmod(a, self.m)


@dataclass(frozen=True)
class CholeskyFactor:
    """Pivoted Cholesky factor of a PSD matrix.

    ``factor`` is ``N x rank`` with ``factor @ factor.T ~= cov`` in the
    original index order; ``lower`` returns the ``N x N`` lower-triangular
    form in pivot order.
    """

    factor: np.ndarray
    perm: np.ndarray
    rank: int
    jitter: float = 0.0

    @property
    def lower(self) -> np.ndarray:
        N = self.factor.shape[0]
        out = np.zeros((N, N))
        out[:, : self.rank] = self.factor[self.perm]
        return out

    def reconstruct(self) -> np.ndarray:
        return self.factor @ self.factor.T


@dataclass(frozen=True, eq=False)
class GaussianMatrixSpec:
    """Law of an ``n x m`` Gaussian matrix: flat mean and ``nm x nm`` covariance."""

    shape: MatrixShape
    mean: np.ndarray
    cov: np.ndarray
    _chol: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        N = self.shape.size
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (N,):
            raise DomainError(f"mean must have length {N}, got {mean.shape}")
        if cov.shape != (N, N):
            raise DomainError(f"cov must be {N}x{N}, got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DomainError("mean and cov must be finite")
        asym = np.max(np.abs(cov - cov.T)) if N > 1 else 0.0
        if asym > 1e-8 * (1.0 + np.max(np.abs(cov))):
            raise DomainError(f"cov is not symmetric (max asymmetry {asym:.3e})")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_arrays(cls, mean, cov, n: int | None = None, m: int | None = None) -> "GaussianMatrixSpec":
        mean = np.asarray(mean, dtype=float)
        if n is None or m is None:
            if mean.ndim != 2:
                raise DomainError("give n and m or a 2-d mean")
            n, m = mean.shape
        return cls(MatrixShape(int(n), int(m)), mean.reshape(-1), np.asarray(cov, dtype=float))

    @classmethod
    def iid(cls, n: int, m: int, variance: float = 1.0, mean=None) -> "GaussianMatrixSpec":
        N = n * m
        mu = np.zeros(N) if mean is None else np.asarray(mean, dtype=float).reshape(-1)
        return cls(MatrixShape(n, m), mu, variance * np.eye(N))

    @property
    def n(self) -> int:
        return self.shape.n

    @property
    def m(self) -> int:
        return self.shape.m

    @property
    def mean_matrix(self) -> np.ndarray:
        return self.mean.reshape(self.n, self.m)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None)).reshape(self.n, self.m)

    def cholesky(self) -> CholeskyFactor:
        if not self._chol:
            self._chol.append(cholesky_psd(self.cov))
        return self._chol[0]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMatrixSpec":
        try:
            n, m = int(d["n"]), int(d["m"])
            mean = np.asarray(d.get("mean", np.zeros(n * m)), dtype=float).reshape(-1)
            cov = np.asarray(d["cov"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed Gaussian matrix spec: {exc}") from exc
        return cls(MatrixShape(n, m), mean, cov)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GaussianMatrixSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# operations


def increment_variance(spec: GaussianMatrixSpec, a: int, b: int) -> float:
    """E((X_a - X_b)^2) for the centered parts of entries ``a`` and ``b``."""
    N = spec.shape.size
    if not (0 <= a < N and 0 <= b < N):
        raise DomainError(f"entry indices ({a}, {b}) outside 0..{N - 1}")
    c = spec.cov
    v = c[a, a] - 2.0 * c[a, b] + c[b, b]
    if -INCREMENT_CLAMP <= v < 0.0:
        v = 0.0
    return float(v)


def increment_matrix(cov: np.ndarray) -> np.ndarray:
    """All pairwise increment variances ``gamma[a, b]`` of a covariance matrix."""
    d = np.diag(cov)
    g = d[:, None] + d[None, :] - 2.0 * cov
    g[(g < 0.0) & (g >= -INCREMENT_CLAMP)] = 0.0
    return g


def _check_same_shape(specX: GaussianMatrixSpec, specY: GaussianMatrixSpec) -> None:
    if specX.shape != specY.shape:
        raise DomainError(f"shape mismatch: {specX.shape} vs {specY.shape}")


def gamma_discrepancy(specX: GaussianMatrixSpec, specY: GaussianMatrixSpec) -> float:
    """Largest absolute difference of increment variances over all entry pairs."""
    _check_same_shape(specX, specY)
    diff = increment_matrix(specX.cov) - increment_matrix(specY.cov)
    return float(np.max(np.abs(diff)))


def _pivoted_cholesky(a: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray, int, np.ndarray]:
    N = a.shape[0]
    L = np.zeros((N, N))
    d = np.diag(a).copy()
    perm = np.arange(N)
    r = 0
    while r < N:
        rest = perm[r:]
        j = r + int(np.argmax(d[rest]))
        piv = d[perm[j]]
        if piv <= tol:
            break
        perm[[r, j]] = perm[[j, r]]
        p = perm[r]
        col = a[:, p] - L[:, :r] @ L[p, :r]
        col /= np.sqrt(piv)
        col[perm[:r]] = 0.0
        L[:, r] = col
        d -= col**2
        d[p] = 0.0
        r += 1
    return L[:, :r], perm, r, d


def cholesky_psd(cov) -> CholeskyFactor:
    """Pivoted Cholesky with diagonal jitter escalation.

    Tries jitter ``lam * trace(cov) / N`` for ``lam`` in ``JITTER_LADDER`` and
    keeps the first factorization whose residual is within tolerance.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DomainError(f"covariance must be square, got {cov.shape}")
    N = cov.shape[0]
    if N == 0:
        raise DomainError("empty covariance")
    if np.max(np.abs(cov - cov.T)) > 1e-8 * (1.0 + np.max(np.abs(cov))):
        raise DomainError("covariance must be symmetric")
    cov = 0.5 * (cov + cov.T)
    trace = float(np.trace(cov))
    scale = max(trace, 0.0)
    tol = PSD_TOL * scale
    resid_tol = 1e-8 * (1.0 + np.max(np.abs(cov)))
    worst = 0.0
    for lam in JITTER_LADDER:
        jit = lam * scale / N
        a = cov + jit * np.eye(N) if jit else cov
        L, perm, rank, d = _pivoted_cholesky(a, tol)
        resid = cov - L @ L.T
        if np.max(np.abs(resid), initial=0.0) <= resid_tol and np.min(d) >= -tol:
            return CholeskyFactor(L, perm, rank, jit)
        rest = perm[rank:]
        if len(rest):
            sub = resid[np.ix_(rest, rest)]
            cand = min(float(np.min(np.diag(sub))), float(np.linalg.eigvalsh(sub)[0]))
        else:
            cand = float(np.min(d))
        worst = min(worst, cand)
    raise NotPSDError("covariance is not positive semidefinite", worst)


def _draw(spec: GaussianMatrixSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    ch = spec.cholesky()
    out = np.broadcast_to(spec.mean, (size, spec.shape.size)).copy()
    if ch.rank:
        z = rng.standard_normal((size, ch.rank))
        out += z @ ch.factor.T
    return out.reshape(size, spec.n, spec.m)


def iter_sample_blocks(
    spec: GaussianMatrixSpec, seed: SeedSpec | int, reps: int, block: int = BLOCK_SIZE
) -> Iterator[np.ndarray]:
    """Yield samples block by block (shape ``(size, n, m)``)."""
    seed = as_seed(seed)
    spec.cholesky()
    for b, size in enumerate(block_sizes(reps, block)):
        yield _draw(spec, seed.rng(b), size)


def sample(spec: GaussianMatrixSpec, seed: SeedSpec | int, reps: int) -> np.ndarray:
    """``reps`` independent draws of the matrix, shape ``(reps, n, m)``."""
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    spec.cholesky()
    parts = map_blocks(lambda rng, size: _draw(spec, rng, size), reps, seed)
    return np.concatenate(parts, axis=0)


def map_sample_blocks(
    spec: GaussianMatrixSpec,
    fn: Callable[[np.ndarray], T],
    reps: int,
    seed: SeedSpec | int,
    threads: int | None = None,
) -> list[T]:
    """Reduce each sampled block with ``fn`` without materialising all samples."""
    spec.cholesky()
    return map_blocks(lambda rng, size: fn(_draw(spec, rng, size)), reps, seed, threads=threads)


def random_cov(N: int, rng: np.random.Generator, lam_range: Sequence[float] = (0.1, 1.0)) -> np.ndarray:
    """``G^T G / N + lam I`` with standard Gaussian ``G`` and uniform ``lam``."""
    G = rng.standard_normal((N, N))
    lam = rng.uniform(*lam_range)
    c = G.T @ G / N + lam * np.eye(N)
    return 0.5 * (c + c.T)


def random_spec_pair(
    n: int, m: int, rng: np.random.Generator
) -> tuple[GaussianMatrixSpec, GaussianMatrixSpec]:
    """Two random specs with a shared N(0,1) mean and independent covariances."""
    N = n * m
    mean = rng.standard_normal(N)
    shape = MatrixShape(n, m)
    return (
        GaussianMatrixSpec(shape, mean, random_cov(N, rng)),
        GaussianMatrixSpec(shape, mean.copy(), random_cov(N, rng)),
    )
