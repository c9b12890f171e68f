"""Smooth surrogate of the min over rows of the top-k row sums.

For a matrix ``x`` and parameters ``(beta, delta, k)``::

    f(x) = -1/(beta*delta) * log sum_r ( sum_{|L|=k} exp(beta * sum_{l in L} x[r, l]) )^(-delta)

The inner subset sum is the elementary symmetric polynomial ``e_k`` of
``y = exp(beta * x[r, :])``; it is evaluated with an O(mk) recurrence carried
in log space, so no term is ever exponentiated before the final ratios.
Rows are shifted by their maximum first, which leaves every ratio unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .covlab import DomainError

NEG_INF = -np.inf


@dataclass(frozen=True)
class SmoothParams:
    beta: float
    delta: float
    k: int

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise DomainError(f"delta must be positive, got {self.delta}")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"k must be a positive integer, got {self.k}")

    def check(self, m: int) -> None:
        if self.k > m:
            raise DomainError(f"k={self.k} exceeds row length m={m}")


@dataclass(frozen=True)
class LogEsymTable:
    """Log elementary symmetric polynomials of one or more rows.

    ``full[..., j] = log e_j(y)`` for ``j = 0..k``.  ``loo[..., a, j]`` omits
    coordinate ``a`` (``j = 0..k-1``); ``lto[..., a, b, j]`` omits both ``a``
    and ``b`` (``j = 0..k-2``, diagonal unused).  Leave-out tables are only
    present when requested.
    """

    full: np.ndarray
    loo: np.ndarray | None = None
    lto: np.ndarray | None = None


@dataclass(frozen=True)
class SubsetWeightTable:
    """Subset weights at a point: ``p[r, a]``, ``pp[r, a, b]`` and ``q[r]``."""

    p: np.ndarray
    pp: np.ndarray
    q: np.ndarray

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "pp": self.pp.tolist(), "q": self.q.tolist()}


def log_binom(m, k):
    return gammaln(np.asarray(m) + 1.0) - gammaln(np.asarray(k) + 1.0) - gammaln(np.asarray(m) - np.asarray(k) + 1.0)


def _esym_dp(logy: np.ndarray, k: int) -> np.ndarray:
    """log e_0..log e_k over the last axis of ``logy``."""
    batch = logy.shape[:-1]
    E = np.full(batch + (k + 1,), NEG_INF)
    E[..., 0] = 0.0
    if k == 0:
        return E
    for t in range(logy.shape[-1]):
        E[..., 1:] = np.logaddexp(E[..., 1:], logy[..., t, None] + E[..., :-1])
    return E


def _drop_one(logy: np.ndarray) -> np.ndarray:
    m = logy.shape[-1]
    keep = ~np.eye(m, dtype=bool)
    idx = np.nonzero(keep)[1].reshape(m, m - 1)
    return logy[..., idx]


def _drop_two(logy: np.ndarray) -> np.ndarray:
    m = logy.shape[-1]
    cols = np.arange(m)
    keep = (cols[None, None, :] != cols[:, None, None]) & (cols[None, None, :] != cols[None, :, None])
    # diagonal pairs keep m-1 entries; pad them with a dropped column so shapes agree
    keep[cols, cols, (cols + 1) % m] = False
    idx = np.nonzero(keep)[2].reshape(m, m, m - 2)
    return logy[..., idx]


def log_esym(logy, k: int, leave_out: int = 0) -> LogEsymTable:
    """Log-domain elementary symmetric polynomials of ``y = exp(logy)``.

    ``leave_out`` selects the leave-one-out (1) and leave-two-out (2) tables,
    each recomputed by running the recurrence on the reduced index set.
    """
    logy = np.asarray(logy, dtype=float)
    m = logy.shape[-1]
    if k < 0 or k > m:
        raise DomainError(f"k={k} must lie in 0..{m}")
    full = _esym_dp(logy, k)
    loo = lto = None
    if leave_out >= 1:
        loo = _esym_dp(_drop_one(logy), k - 1) if k >= 1 else None
    if leave_out >= 2:
        if k >= 2 and m >= 2:
            lto = _esym_dp(_drop_two(logy), k - 2)
            ar = np.arange(m)
            lto[..., ar, ar, :] = np.nan
        else:
            lto = np.full(logy.shape[:-1] + (m, m, 0), NEG_INF)
    return LogEsymTable(full, loo, lto)


def _prepare(x, params: SmoothParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DomainError(f"x must be a 2-d matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("x must have finite entries")
    params.check(x.shape[1])
    return x


def _row_log_ek(x: np.ndarray, params: SmoothParams, leave_out: int = 0):
    """Shifted log-row-values and tables; ``log e_k(y) = shift + table``."""
    rowmax = x.max(axis=1)
    logy = params.beta * (x - rowmax[:, None])
    tab = log_esym(logy, params.k, leave_out)
    row_log = tab.full[:, params.k] + params.k * params.beta * rowmax
    return logy, tab, row_log


def f_value(x, params: SmoothParams) -> float:
    """The smooth surrogate evaluated at ``x``."""
    x = _prepare(x, params)
    _, _, row_log = _row_log_ek(x, params)
    bd = params.beta * params.delta
    return float(-logsumexp(-params.delta * row_log) / bd)


def min_sum_topk(x, k: int) -> float | np.ndarray:
    """Minimum over rows of the sum of the ``k`` largest entries.

    Accepts a single ``(n, m)`` matrix or a stack ``(..., n, m)``; ``k = 1``
    gives the min-max statistic.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        raise DomainError("x must be at least 2-d")
    m = x.shape[-1]
    if not 1 <= k <= m:
        raise DomainError(f"k={k} must lie in 1..{m}")
    if k == 1:
        top = x.max(axis=-1)
    elif k == m:
        top = x.sum(axis=-1)
    else:
        top = np.partition(x, m - k, axis=-1)[..., m - k :].sum(axis=-1)
    out = top.min(axis=-1)
    return float(out) if out.ndim == 0 else out


def minmax(x) -> float | np.ndarray:
    return min_sum_topk(x, 1)


def weight_tables(x, params: SmoothParams) -> SubsetWeightTable:
    """Subset weights ``p`` (singles and pairs) and row weights ``q``."""
    x = _prepare(x, params)
    n, m = x.shape
    k = params.k
    logy, tab, row_log = _row_log_ek(x, params, leave_out=2)
    log_ek = tab.full[:, k]
    logp = logy + tab.loo[:, :, k - 1] - log_ek[:, None]
    if k >= 2:
        logpp = logy[:, :, None] + logy[:, None, :] + tab.lto[:, :, :, k - 2] - log_ek[:, None, None]
    else:
        logpp = np.full((n, m, m), NEG_INF)
    ar = np.arange(m)
    logpp[:, ar, ar] = logp
    d = params.delta
    logq = d * row_log + logsumexp(-d * row_log)
    return SubsetWeightTable(np.exp(logp), np.exp(logpp), np.exp(logq))


def gradient(x, params: SmoothParams) -> np.ndarray:
    w = weight_tables(x, params)
    return w.p / w.q[:, None]


def _hessian_from_weights(w: SubsetWeightTable, params: SmoothParams) -> np.ndarray:
    n, m = w.p.shape
    g = (w.p / w.q[:, None]).reshape(-1)
    H = params.delta * np.outer(g, g)
    for r in range(n):
        s = slice(r * m, (r + 1) * m)
        pr = w.p[r]
        H[s, s] += (-(1.0 + params.delta) * np.outer(pr, pr) + w.pp[r]) / w.q[r]
    H *= params.beta
    return 0.5 * (H + H.T)


def hessian(x, params: SmoothParams) -> np.ndarray:
    """``nm x nm`` Hessian in the flat row-major entry order."""
    return _hessian_from_weights(weight_tables(x, params), params)


def absbound(n: int, m: int, params: SmoothParams) -> float:
    """Closed-form cap on the off-diagonal absolute Hessian mass."""
    k, a_n = params.k, 1.0 - 1.0 / n
    return params.beta * (k / m) * (m - k + a_n * (2 * m - 1) * k * params.delta)


def hessian_abs_offdiag_sum(x, params: SmoothParams) -> tuple[float, float]:
    """Sum of ``|H|`` over distinct entry pairs, and its closed-form cap."""
    x = _prepare(x, params)
    H = hessian(x, params)
    total = float(np.abs(H).sum() - np.abs(np.diag(H)).sum())
    return total, absbound(x.shape[0], x.shape[1], params)


def composite_hessian(x, params: SmoothParams, g1: Callable, g2: Callable) -> np.ndarray:
    """Hessian of ``g(f(x))`` given the derivatives ``g1 = g'`` and ``g2 = g''``."""
    w = weight_tables(x, params)
    fx = f_value(x, params)
    grad = (w.p / w.q[:, None]).reshape(-1)
    return g2(fx) * np.outer(grad, grad) + g1(fx) * _hessian_from_weights(w, params)


def composite_bound(k: int, params: SmoothParams, g1_sup: float, g2_sup: float) -> float:
    """Cap on the total absolute Hessian mass of ``g(f(x))``, diagonal included."""
    return k * k * g2_sup + 2.0 * params.beta * k * (1.0 + params.delta * k) * g1_sup


def sandwich_gaps(n: int, m: int, params: SmoothParams) -> tuple[float, float]:
    """Lower and upper slack between ``f`` and the hard statistic."""
    return float(log_binom(m, params.k)) / params.beta, np.log(n) / (params.beta * params.delta)
