"""Lead-lag statistics of asynchronously observed Brownian paths.

``Z = (B1, B2, Bt1, Bt2)`` is a two-sided 4-dimensional Brownian motion whose
standardized increments have correlation ``corr``.  ``B`` is observed on
``{i T/(bN)}``, the lagged process ``W^theta(t) = Bt(t - theta)`` on
``{j T/(wN)}``.  For coordinate ``a``::

    U_a(theta) = sum_{i, j} dB_a(I_i) dW^theta_a(J_j) 1{I_i cap J_j != empty}

with left-open intervals ``I_i = ((i-1)T/(bN), iT/(bN)]`` and likewise ``J_j``.
The overlap indicator does not depend on ``theta``, so the overlapping
``(i, j)`` pairs are found once per grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .covlab import (
    DomainError,
    GaussianMatrixSpec,
    MatrixShape,
    SeedSpec,
    _draw,
    as_seed,
    cholesky_psd,
    map_blocks,
)
from .montecarlo import EmpiricalSample, ks_distance, ks_noise, minmax_sample

FLOOR_EPS = 1e-9
SIM_BLOCK = 1024
NULL_PAIRS = ((0, 2), (1, 3))


def _floor(x: float) -> int:
    return int(math.floor(x + FLOOR_EPS))


def default_theta_grid(T: float, m: int) -> list[float]:
    """``m`` equispaced lags in ``[-T/4, T/4]``."""
    if m < 2:
        raise DomainError(f"need at least 2 lags, got m={m}")
    return np.linspace(-T / 4, T / 4, m).tolist()


@dataclass(frozen=True, eq=False)
class LeadLagConfig:
    T: float
    b: float
    w: float
    N: int
    theta_grid: tuple
    corr: np.ndarray = field(default_factory=lambda: np.eye(4))
    allow_rho: bool = False

    def __post_init__(self):
        if not (self.T > 0 and self.b > 0 and self.w > 0):
            raise DomainError("T, b and w must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        if _floor(self.b * self.N) < 1 or _floor(self.w * self.N) < 1:
            raise DomainError("grids need at least one interval (b*N >= 1 and w*N >= 1)")
        theta = tuple(float(t) for t in self.theta_grid)
        if len(theta) < 2:
            raise DomainError(f"theta grid needs m >= 2 lags, got {len(theta)}")
        object.__setattr__(self, "theta_grid", theta)
        c = np.array(self.corr, dtype=float)
        if c.shape != (4, 4) or not np.allclose(c, c.T, atol=1e-12):
            raise DomainError("corr must be a symmetric 4x4 matrix")
        if not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise DomainError("corr must have unit diagonal")
        if not self.allow_rho and any(abs(c[i, j]) > 0 for i, j in NULL_PAIRS):
            raise DomainError("corr couples B_i with its lagged partner; set allow_rho to permit this")
        cholesky_psd(c)
        object.__setattr__(self, "corr", c)

    @property
    def m(self) -> int:
        return len(self.theta_grid)

    @property
    def nb(self) -> int:
        return _floor(self.b * self.N)

    @property
    def nw(self) -> int:
        return _floor(self.w * self.N)

    def times_B(self) -> np.ndarray:
        return np.arange(self.nb + 1) * self.T / (self.b * self.N)

    def times_W(self) -> np.ndarray:
        return np.arange(self.nw + 1) * self.T / (self.w * self.N)

    def with_N(self, N: int) -> "LeadLagConfig":
        return LeadLagConfig(self.T, self.b, self.w, N, self.theta_grid, self.corr, self.allow_rho)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "b": self.b,
            "w": self.w,
            "N": self.N,
            "theta_grid": list(self.theta_grid),
            "corr": self.corr.tolist(),
            "allow_rho": self.allow_rho,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LeadLagConfig":
        try:
            T = float(doc.get("T", 1.0))
            theta = doc.get("theta_grid")
            if theta is None:
                theta = default_theta_grid(T, int(doc.get("m", 8)))
            return cls(
                T,
                float(doc["b"]),
                float(doc["w"]),
                int(doc.get("N", 100)),
                tuple(theta),
                np.asarray(doc.get("corr", np.eye(4)), dtype=float),
                bool(doc.get("allow_rho", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed lead-lag config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "LeadLagConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def overlap_pairs_bruteforce(tb, tw) -> np.ndarray:
    """All ``(i, j)`` with overlapping left-open intervals, by double loop."""
    out = []
    for i in range(1, len(tb)):
        for j in range(1, len(tw)):
            if max(tb[i - 1], tw[j - 1]) < min(tb[i], tw[j]):
                out.append((i - 1, j - 1))
    return np.array(out, dtype=np.intp).reshape(-1, 2)


def overlap_pairs(tb, tw) -> np.ndarray:
    """Overlapping interval pairs ``(i, j)`` (zero based) by a linear sweep."""
    i = j = 1
    out = []
    while i < len(tb) and j < len(tw):
        if max(tb[i - 1], tw[j - 1]) < min(tb[i], tw[j]):
            out.append((i - 1, j - 1))
        if tb[i] < tw[j]:
            i += 1
        elif tw[j] < tb[i]:
            j += 1
        else:
            i += 1
            j += 1
    return np.array(out, dtype=np.intp).reshape(-1, 2)


@dataclass(frozen=True)
class _Layout:
    """Union time grid and where each observation time sits in it."""

    grid: np.ndarray
    zero: int
    idx_B: np.ndarray
    idx_W: np.ndarray  # (m, nw + 1)
    pairs: np.ndarray
    chol: np.ndarray


def _layout(config: LeadLagConfig) -> _Layout:
    tb, tw = config.times_B(), config.times_W()
    shifted = tw[None, :] - np.asarray(config.theta_grid)[:, None]
    grid = np.unique(np.concatenate([[0.0], tb, shifted.ravel()]))
    L = cholesky_psd(config.corr).factor
    return _Layout(
        grid,
        int(np.searchsorted(grid, 0.0)),
        np.searchsorted(grid, tb),
        np.searchsorted(grid, shifted),
        overlap_pairs(tb, tw),
        L,
    )


def _paths(lay: _Layout, rng: np.random.Generator, size: int) -> np.ndarray:
    """``(size, len(grid), 4)`` path values with ``Z(0) = 0``."""
    dt = np.diff(lay.grid)
    z = rng.standard_normal((size, dt.size, lay.chol.shape[1]))
    inc = (z @ lay.chol.T) * np.sqrt(dt)[None, :, None]
    cum = np.zeros((size, lay.grid.size, 4))
    np.cumsum(inc, axis=1, out=cum[:, 1:])
    return cum - cum[:, lay.zero : lay.zero + 1]


@dataclass(frozen=True, eq=False)
class GridObservation:
    """One replication: increments of ``B`` on its grid and of every ``W^theta``."""

    times_B: np.ndarray
    times_W: np.ndarray
    theta_grid: tuple
    dB: np.ndarray  # (nb, 2)
    dW: np.ndarray  # (m, nw, 2)
    pairs: np.ndarray


def _increments(Z: np.ndarray, lay: _Layout):
    B = Z[:, lay.idx_B, :2]
    W = Z[:, lay.idx_W, 2:]
    return np.diff(B, axis=1), np.diff(W, axis=2)


def simulate_paths(config: LeadLagConfig, seed: SeedSpec | int) -> GridObservation:
    lay = _layout(config)
    Z = _paths(lay, as_seed(seed).rng(0), 1)
    dB, dW = _increments(Z, lay)
    return GridObservation(config.times_B(), config.times_W(), config.theta_grid, dB[0], dW[0], lay.pairs)


def u_statistic(obs: GridObservation, theta: float, coordinate: int) -> float:
    if coordinate not in (1, 2):
        raise DomainError(f"coordinate must be 1 or 2, got {coordinate}")
    hits = [k for k, t in enumerate(obs.theta_grid) if t == theta]
    if not hits:
        raise DomainError(f"theta={theta} was not simulated")
    a, p = coordinate - 1, obs.pairs
    return float(np.sum(obs.dB[p[:, 0], a] * obs.dW[hits[0], p[:, 1], a]))


def _u_block(dB: np.ndarray, dW: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """``(size, 2, m)`` lag statistics from stacked increments."""
    b = dB[:, pairs[:, 0], :]  # (size, P, 2)
    w = dW[:, :, pairs[:, 1], :]  # (size, m, P, 2)
    return np.einsum("spa,smpa->sam", b, w)


class SignedSampler:
    """Sampler of ``sqrt(N) U`` (signed), shape ``(size, 2, m)``."""

    def __init__(self, config: LeadLagConfig):
        self.config = config
        self.layout = _layout(config)

    def draw(self, rng, size):
        dB, dW = _increments(_paths(self.layout, rng, size), self.layout)
        return math.sqrt(self.config.N) * _u_block(dB, dW, self.layout.pairs)


class FMatrixSampler(SignedSampler):
    """Sampler of the matrix ``sqrt(N) |U_i(theta)|``."""

    def draw(self, rng, size):
        return np.abs(super().draw(rng, size))


def _sample(sampler, reps: int, seed, block: int = SIM_BLOCK) -> np.ndarray:
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    return np.concatenate(map_blocks(sampler.draw, reps, seed, block=block), axis=0)


def f_matrix_sample(config: LeadLagConfig, reps: int, seed: SeedSpec | int) -> np.ndarray:
    return _sample(FMatrixSampler(config), reps, seed)


def _interval_overlap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lengths of pairwise intersections of intervals ``(a[k-1], a[k]]`` and ``(b[l-1], b[l]]``."""
    lo = np.maximum(a[:-1, None], b[None, :-1])
    hi = np.minimum(a[1:, None], b[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def exact_covariance(config: LeadLagConfig) -> np.ndarray:
    """Exact ``2m x 2m`` covariance of ``sqrt(N) U`` (flat order ``a * m + theta``).

    Isserlis' theorem reduces every fourth moment of increments to products
    of pairwise covariances ``corr[x, y] * |I cap J|``.
    """
    tb, tw = config.times_B(), config.times_W()
    thetas = np.asarray(config.theta_grid)
    c = config.corr
    pi, pj = overlap_pairs(tb, tw).T
    m = config.m
    OB = _interval_overlap(tb, tb)[np.ix_(pi, pi)]
    out = np.zeros((2 * m, 2 * m))
    for s, ts in enumerate(thetas):
        ws = tw - ts
        BWs = _interval_overlap(tb, ws)
        for u, tu in enumerate(thetas):
            wu = tw - tu
            OW = _interval_overlap(ws, wu)[np.ix_(pj, pj)]
            direct = float(np.sum(OB * OW))
            # |I_{i_p} cap J^u_{j_q}| * |J^s_{j_p} cap I_{i_q}|
            cross = float(np.sum(_interval_overlap(tb, wu)[np.ix_(pi, pj)] * BWs[np.ix_(pi, pj)].T))
            for a in range(2):
                for b in range(2):
                    out[a * m + s, b * m + u] = c[a, b] * c[2 + a, 2 + b] * direct + c[a, 2 + b] * c[2 + a, b] * cross
    out *= config.N
    return 0.5 * (out + out.T)


def exact_column_covariances(config: LeadLagConfig) -> np.ndarray:
    """``(m, 2, 2)`` covariance of each column ``sqrt(N) (U_1, U_2)(theta)``."""
    full = exact_covariance(config)
    m = config.m
    return np.stack([full[np.ix_([s, m + s], [s, m + s])] for s in range(m)])


def mc_column_covariances(config: LeadLagConfig, reps: int, seed: SeedSpec | int):
    """Monte Carlo column covariances and their elementwise standard errors."""
    if reps < 2:
        raise DomainError(f"need reps >= 2 for a covariance estimate, got {reps}")
    x = _sample(SignedSampler(config), reps, seed)
    xc = x - x.mean(axis=0)
    prod = np.einsum("sam,sbm->smab", xc, xc)
    cov = prod.sum(axis=0) / (reps - 1)
    se = prod.std(axis=0, ddof=1) / math.sqrt(reps)
    return cov, se


class AbsGaussianSampler:
    """Entrywise absolute value of a centered Gaussian matrix."""

    def __init__(self, spec: GaussianMatrixSpec):
        spec.cholesky()
        self.spec = spec

    def draw(self, rng, size):
        return np.abs(_draw(self.spec, rng, size))


@dataclass(frozen=True, eq=False)
class MatchedColumns:
    column_cov: np.ndarray  # (m, 2, 2)
    spec: GaussianMatrixSpec
    sampler: AbsGaussianSampler


def column_matched_spec(column_cov) -> GaussianMatrixSpec:
    """``2 x m`` centered Gaussian with the given column covariances, columns independent."""
    cc = np.asarray(column_cov, dtype=float)
    m = cc.shape[0]
    cov = np.zeros((2 * m, 2 * m))
    for s in range(m):
        ix = [s, m + s]
        cov[np.ix_(ix, ix)] = 0.5 * (cc[s] + cc[s].T)
    return GaussianMatrixSpec(MatrixShape(2, m), np.zeros(2 * m), cov)


def matched_gaussian_columns(
    config: LeadLagConfig, moment_reps: int, seed: SeedSpec | int, method: str = "mc"
) -> MatchedColumns:
    """Column-matched Gaussian model; ``method`` is ``"mc"`` or ``"exact"``."""
    if method == "mc":
        cc, _ = mc_column_covariances(config, moment_reps, seed)
    elif method == "exact":
        cc = exact_column_covariances(config)
    else:
        raise DomainError(f"unknown matching method {method!r}")
    spec = column_matched_spec(cc)
    return MatchedColumns(cc, spec, AbsGaussianSampler(spec))


def shape_value(m: int, N: int) -> float:
    return math.log(m) ** 6 / N


def convergence_experiment(
    config: LeadLagConfig,
    N_list,
    reps: int,
    seed: SeedSpec | int,
    moment_reps: int = 100_000,
    method: str = "mc",
) -> list[dict]:
    """KS distance between ``min max F^N`` and its column-matched Gaussian, per ``N``."""
    Ns = [int(N) for N in N_list]
    if not Ns:
        raise DomainError("N list is empty")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise DomainError(f"N list must be strictly ascending, got {Ns}")
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    seed = as_seed(seed)
    rows = []
    for t, N in enumerate(Ns):
        cfg = config.with_N(N)
        matched = matched_gaussian_columns(cfg, moment_reps, seed.child(3 * t + 1), method)
        f = EmpiricalSample(
            _sample(FMatrixSampler(cfg), reps, seed.child(3 * t)).max(axis=-1).min(axis=-1), seed.child(3 * t)
        )
        g = minmax_sample(matched.sampler, reps, seed.child(3 * t + 2))
        rows.append(
            {"N": N, "m": cfg.m, "reps": reps, "ks": ks_distance(f, g), "shape": shape_value(cfg.m, N), "seed": seed.root}
        )
    return rows


@dataclass(frozen=True)
class TrendResult:
    spearman: float
    noise: float
    signal_units: float
    drop_units: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "spearman": self.spearman,
            "noise": self.noise,
            "signal_units": self.signal_units,
            "drop_units": self.drop_units,
            "passed": self.passed,
        }


def ks_trend_test(Ns, ks, reps: int, signal_units: float = 3.0, drop_units: float = 1.0) -> TrendResult:
    """Decreasing-trend test on a KS column.

    Passes when the Spearman correlation of ``(N, ks)`` is nonpositive and,
    if the first KS value exceeds ``signal_units`` noise units, the last one
    is lower by at least ``drop_units`` units.
    """
    ks = np.asarray(ks, dtype=float)
    noise = ks_noise(reps, reps)
    rho = float(spearmanr(np.asarray(Ns, dtype=float), ks).statistic) if np.ptp(ks) > 0 else 0.0
    first, last = ks[0] / noise, (ks[0] - ks[-1]) / noise
    ok = rho <= 0 and (first <= signal_units or last >= drop_units)
    return TrendResult(rho, noise, float(first), float(last), bool(ok))
