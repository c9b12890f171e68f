"""Matrices of centered Gaussian quadratic forms (second Wiener chaos).

Entry ``(i1, i2)`` is ``xi^T A xi - E(xi^T A xi)`` with ``xi ~ N(0, S)``.
Writing ``xi = S^{1/2} eta`` with standard ``eta`` gives
``F = eta^T B eta - tr(B)``, ``B = S^{1/2} A S^{1/2}``; all moments below are
expressed through the ``B`` matrices:

* ``Cov(F_a, F_b) = 2 tr(B_a B_b)``
* ``kappa_4(F_a) = 48 tr(B_a^4)``
* ``<DF_a, -DL^{-1} F_b> = 2 eta^T B_a B_b eta``  (``DF = 2 B eta``)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covlab import (
    DomainError,
    GaussianMatrixSpec,
    MatrixShape,
    NotPSDError,
    PSD_TOL,
    SeedSpec,
    map_blocks,
)
from .montecarlo import SampleStats, ks_distance, ks_noise, minmax_sample

log = logging.getLogger(__name__)

EIG_CUTOFF = 1e-12


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root with negative eigenvalues clamped to 0."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    tol = PSD_TOL * max(float(np.sum(np.abs(w))), 1.0)
    if w.min() < -tol:
        raise NotPSDError("base covariance S is not positive semidefinite", float(w.min()))
    r = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (r + r.T)


@dataclass(frozen=True, eq=False)
class QuadraticFormMatrixSpec:
    """Per-entry symmetric coefficient matrices ``A`` (shape ``(n, m, d, d)``) and base covariance ``S``."""

    shape: MatrixShape
    A: np.ndarray
    S: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n, m = self.shape.n, self.shape.m
        A = np.array(self.A, dtype=float)
        if A.ndim != 4 or A.shape[:2] != (n, m) or A.shape[2] != A.shape[3]:
            raise DomainError(f"A must have shape ({n}, {m}, d, d), got {A.shape}")
        d = A.shape[2]
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        S = np.eye(d) if self.S is None else np.array(self.S, dtype=float)
        if S.shape != (d, d):
            raise DomainError(f"S must be {d}x{d}, got {S.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(S))):
            raise DomainError("A and S must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "S", 0.5 * (S + S.T))
        if np.array_equal(self.S, np.eye(d)):
            B = A.copy()
        else:
            R = psd_sqrt(self.S)
            B = np.einsum("uv,ijvw,wx->ijux", R, A, R)
            B = 0.5 * (B + np.swapaxes(B, -1, -2))
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return self.A.shape[2]

    @property
    def n(self) -> int:
        return self.shape.n

    @property
    def m(self) -> int:
        return self.shape.m

    @property
    def B_flat(self) -> np.ndarray:
        """``(nm, d, d)`` in flat row-major entry order."""
        return self.B.reshape(-1, self.d, self.d)

    def _eig(self):
        """Stacked nonzero eigenpairs of every ``B``: vectors, values, owning entry."""
        if "eig" not in self._cache:
            Bf = self.B_flat
            w, V = np.linalg.eigh(Bf)
            scale = max(float(np.abs(w).max(initial=0.0)), 1e-300)
            keep = np.abs(w) > EIG_CUTOFF * scale
            ent, col = np.nonzero(keep)
            vecs = V[ent, :, col].T if ent.size else np.zeros((self.d, 0))
            self._cache["eig"] = (np.ascontiguousarray(vecs), w[ent, col], ent)
        return self._cache["eig"]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` draws of the ``n x m`` matrix of centered quadratic forms."""
        vecs, vals, ent = self._eig()
        N = self.shape.size
        eta = rng.standard_normal((size, self.d))
        out = np.zeros((size, N))
        if vals.size:
            z = eta @ vecs
            contrib = (z * z - 1.0) * vals
            M = np.zeros((vals.size, N))
            M[np.arange(vals.size), ent] = 1.0
            out = contrib @ M
        return out.reshape(size, self.n, self.m)

    def scaled(self, c: float) -> "QuadraticFormMatrixSpec":
        return QuadraticFormMatrixSpec(self.shape, c * self.A, self.S)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "S": self.S.tolist(),
            "A": {f"{i},{j}": self.A[i, j].tolist() for i in range(self.n) for j in range(self.m)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QuadraticFormMatrixSpec":
        try:
            d = int(doc["d"])
            raw = doc["A"]
            keys = [tuple(int(t) for t in key.split(",")) for key in raw]
            n = int(doc.get("n", 1 + max(k[0] for k in keys)))
            m = int(doc.get("m", 1 + max(k[1] for k in keys)))
            A = np.zeros((n, m, d, d))
            for key, (i, j) in zip(raw, keys):
                a = np.asarray(raw[key], dtype=float)
                asym = float(np.max(np.abs(a - a.T)))
                if asym > 1e-8:
                    log.warning("A[%s] asymmetric by %.3e; symmetrizing", key, asym)
                A[i, j] = a
            S = np.asarray(doc["S"], dtype=float) if doc.get("S") is not None else None
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise DomainError(f"malformed quadratic-form spec: {exc}") from exc
        return cls(MatrixShape(n, m), A, S)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "QuadraticFormMatrixSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def chaos_sample(spec: QuadraticFormMatrixSpec, reps: int, seed: SeedSpec | int) -> np.ndarray:
    if reps < 1:
        raise DomainError(f"reps must be positive, got {reps}")
    return np.concatenate(map_blocks(spec.draw, reps, seed), axis=0)


def covariance_exact(spec: QuadraticFormMatrixSpec) -> np.ndarray:
    Bf = spec.B_flat.reshape(spec.shape.size, -1)
    C = 2.0 * Bf @ Bf.T
    return 0.5 * (C + C.T)


def fourth_cumulant_exact(spec: QuadraticFormMatrixSpec, entry: int | tuple[int, int]) -> float:
    """``E F^4 - 3 (E F^2)^2`` of one entry."""
    a = spec.shape.idx(*entry) if isinstance(entry, tuple) else int(entry)
    if not 0 <= a < spec.shape.size:
        raise DomainError(f"entry {entry} out of range")
    B2 = spec.B_flat[a] @ spec.B_flat[a]
    return float(48.0 * np.sum(B2 * B2))


def fourth_cumulants(spec: QuadraticFormMatrixSpec) -> np.ndarray:
    Bf = spec.B_flat
    B2 = Bf @ Bf
    return 48.0 * np.einsum("aij,aij->a", B2, B2)


def _check_cov(spec: QuadraticFormMatrixSpec, gaussian_cov) -> np.ndarray:
    C = np.asarray(gaussian_cov, dtype=float)
    N = spec.shape.size
    if C.shape != (N, N):
        raise DomainError(f"gaussian_cov must be {N}x{N}, got {C.shape}")
    return C


def delta_mc(
    spec: QuadraticFormMatrixSpec, gaussian_cov, reps: int, seed: SeedSpec | int, block: int = 512
) -> SampleStats:
    """Monte Carlo estimate of ``E max_{a,b} |2 eta^T B_a B_b eta - sigma_ab|``."""
    C = _check_cov(spec, gaussian_cov)
    Bf = spec.B_flat

    def run(rng, size):
        eta = rng.standard_normal((size, spec.d))
        Y = np.einsum("auv,sv->sau", Bf, eta)
        G = 2.0 * np.einsum("sau,sbu->sab", Y, Y)
        return np.abs(G - C).reshape(size, -1).max(axis=1)

    return SampleStats.from_values(np.concatenate(map_blocks(run, reps, seed, block=block)))


def duality_check(spec: QuadraticFormMatrixSpec, reps: int, seed: SeedSpec | int, block: int = 512):
    """Empirical mean and standard error of ``2 eta^T B_a B_b eta`` for all pairs.

    Returns ``(mean, stderr, exact)`` arrays of shape ``(nm, nm)``, where
    ``exact = 2 tr(B_a B_b)``.
    """
    Bf = spec.B_flat
    N = spec.shape.size

    def run(rng, size):
        eta = rng.standard_normal((size, spec.d))
        Y = np.einsum("auv,sv->sau", Bf, eta)
        G = 2.0 * np.einsum("sau,sbu->sab", Y, Y)
        return G.sum(axis=0), (G * G).sum(axis=0)

    parts = map_blocks(run, reps, seed, block=block)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / reps
    var = np.clip(s2 / reps - mean**2, 0.0, None) * reps / (reps - 1)
    return mean, np.sqrt(var / reps), covariance_exact(spec).reshape(N, N)


@dataclass(frozen=True)
class ChaosMomentReport:
    cov: np.ndarray
    kappa4: np.ndarray
    A_quantity: float
    B_quantity: float
    shape_value: float
    q: int
    sigma_min: float  # smallest Gaussian entry std; the bound needs it bounded away from 0

    def to_dict(self) -> dict:
        return {
            "sigma_min": self.sigma_min,
            "A_quantity": self.A_quantity,
            "B_quantity": self.B_quantity,
            "shape_value": self.shape_value,
            "q": self.q,
            "kappa4_max": float(np.max(self.kappa4)),
        }


def proposition_quantities_from_moments(
    n: int, m: int, cov_f, kappa4, gaussian_cov, q: int = 2
) -> ChaosMomentReport:
    """The covariance-gap and fourth-cumulant aggregates for chaos order ``q``."""
    if q < 2:
        raise DomainError(f"chaos order q must be >= 2, got {q}")
    if m < 2:
        raise DomainError("need m >= 2 (log m must be positive)")
    cov_f = np.asarray(cov_f, dtype=float)
    kappa4 = np.asarray(kappa4, dtype=float).reshape(-1)
    C = np.asarray(gaussian_cov, dtype=float)
    if cov_f.shape != C.shape or cov_f.shape != (n * m, n * m) or kappa4.size != n * m:
        raise DomainError("moment arrays do not match the n x m shape")
    lm, lnm = math.log(m), math.log(n * m)
    A_q = float(np.max(np.abs(C - cov_f))) * n**2 * lm * lnm
    B_q = float(np.max(kappa4)) * n**4 * lm**2 * lnm ** (2 * q)
    shape = A_q ** (1 / 3) + max(B_q, 0.0) ** (1 / 6)
    sigma_min = float(np.sqrt(np.clip(np.diag(C), 0.0, None)).min())
    return ChaosMomentReport(cov_f, kappa4, A_q, B_q, shape, q, sigma_min)


def proposition_quantities(spec: QuadraticFormMatrixSpec, gaussian_cov, q: int = 2) -> ChaosMomentReport:
    """Aggregates with exact second-chaos moments of ``spec``."""
    if q != 2:
        raise DomainError("exact moments are available for q = 2 only; use proposition_quantities_from_moments")
    C = _check_cov(spec, gaussian_cov)
    return proposition_quantities_from_moments(spec.n, spec.m, covariance_exact(spec), fourth_cumulants(spec), C, q)


def matched_gaussian(spec: QuadraticFormMatrixSpec) -> GaussianMatrixSpec:
    """Centered Gaussian matrix with the exact covariance of ``spec``."""
    g = GaussianMatrixSpec(spec.shape, np.zeros(spec.shape.size), covariance_exact(spec))
    g.cholesky()
    return g


def rank_one_spec(n: int, m: int, d: int, rng: np.random.Generator) -> QuadraticFormMatrixSpec:
    """Entries ``(u^T eta)^2 - 1`` scaled to unit variance, ``u`` random unit vectors."""
    U = rng.standard_normal((n, m, d))
    U /= np.linalg.norm(U, axis=-1, keepdims=True)
    A = np.einsum("iju,ijv->ijuv", U, U) / math.sqrt(2.0)
    return QuadraticFormMatrixSpec(MatrixShape(n, m), A)


def fourth_moment_family(base: QuadraticFormMatrixSpec, t: float, copies: int) -> QuadraticFormMatrixSpec:
    """Mix ``base`` with an average of ``copies`` independent replicas of itself.

    The result is ``sqrt(1-t) F_0 + sqrt(t) F_inf`` where ``F_inf`` has
    coefficient matrices ``B_0 (x) I_copies / sqrt(copies)`` on fresh
    coordinates.  The covariance equals that of ``base`` for every ``t``;
    the fourth cumulants are ``((1-t)^2 + t^2/copies) kappa_4(base)``.
    Requires ``S = I`` on the base.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if copies < 1:
        raise DomainError(f"copies must be positive, got {copies}")
    B = base.B
    n, m, d = base.n, base.m, base.d
    D = d * (1 + copies)
    A = np.zeros((n, m, D, D))
    A[:, :, :d, :d] = math.sqrt(1.0 - t) * B
    w = math.sqrt(t / copies)
    for c in range(copies):
        s = slice(d * (1 + c), d * (2 + c))
        A[:, :, s, s] = w * B
    return QuadraticFormMatrixSpec(base.shape, A)


def family_t_grid(copies: int, steps: int) -> np.ndarray:
    """Mixing weights from 0 to the cumulant-minimizing ``copies/(copies+1)``."""
    if steps < 2:
        raise DomainError(f"need at least 2 family steps, got {steps}")
    return np.linspace(0.0, copies / (copies + 1.0), steps)


def scaling_experiment(
    base: QuadraticFormMatrixSpec, steps: int, copies: int, reps: int, seed: SeedSpec | int
) -> list[dict]:
    """KS distance between chaos and matched-Gaussian min-max along the family."""
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    rows = []
    for i, t in enumerate(family_t_grid(copies, steps)):
        spec = fourth_moment_family(base, float(t), copies)
        gauss = matched_gaussian(spec)
        rep = proposition_quantities(spec, gauss.cov)
        a = minmax_sample(spec, reps, seed.child(2 * i))
        b = minmax_sample(gauss, reps, seed.child(2 * i + 1))
        rows.append(
            {
                "t": float(t),
                "kappa4_max": float(np.max(rep.kappa4)),
                "ks": ks_distance(a, b),
                "shape": rep.shape_value,
                "noise": ks_noise(reps, reps),
            }
        )
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def empirical_kappa4(values) -> SampleStats:
    """Fourth-cumulant estimate for a known-zero-mean sample, delta-method stderr."""
    f = np.asarray(values, dtype=float).reshape(-1)
    m2 = float(np.mean(f**2))
    m4 = float(np.mean(f**4))
    psi = f**4 - 6.0 * m2 * f**2
    se = float(psi.std(ddof=1) / math.sqrt(f.size))
    return SampleStats(f.size, m4 - 3.0 * m2 * m2, se, float(f.min()), float(f.max()))


__all__ = [
    "ChaosMomentReport",
    "QuadraticFormMatrixSpec",
    "chaos_sample",
    "covariance_exact",
    "delta_mc",
    "duality_check",
    "family_t_grid",
    "fourth_cumulant_exact",
    "fourth_cumulants",
    "fourth_moment_family",
    "matched_gaussian",
    "proposition_quantities",
    "proposition_quantities_from_moments",
    "rank_one_spec",
    "scaling_experiment",
]
