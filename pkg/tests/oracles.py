"""Independent reference implementations used only by the tests.

Everything here is written directly from the defining formulas in the
exponential domain, enumerating subsets explicitly.  Nothing is imported
from the package under test.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def esym_bruteforce(y, k: int) -> float:
    return float(sum(math.prod(c) for c in itertools.combinations(y, k))) if k else 1.0


def row_subset_sums(x, beta: float, k: int) -> np.ndarray:
    """``S_r = sum_{|L| = k} exp(beta * sum_{l in L} x[r, l])`` for each row."""
    x = np.asarray(x, dtype=float)
    subsets = list(itertools.combinations(range(x.shape[1]), k))
    return np.array([sum(math.exp(beta * sum(row[l] for l in L)) for L in subsets) for row in x])


def f_bruteforce(x, beta: float, delta: float, k: int) -> float:
    S = row_subset_sums(x, beta, k)
    return -math.log(float(np.sum(S ** (-delta)))) / (beta * delta)


def weights_bruteforce(x, beta: float, delta: float, k: int):
    """``p[r, a]``, ``pp[r, a, b]`` (diagonal = ``p``) and ``q[r]`` by enumeration."""
    x = np.asarray(x, dtype=float)
    n, m = x.shape
    p = np.zeros((n, m))
    pp = np.zeros((n, m, m))
    S = np.zeros(n)
    for r in range(n):
        for L in itertools.combinations(range(m), k):
            wgt = math.exp(beta * sum(x[r, l] for l in L))
            S[r] += wgt
            for a in L:
                p[r, a] += wgt
                for b in L:
                    pp[r, a, b] += wgt
        p[r] /= S[r]
        pp[r] /= S[r]
    q = np.array([sum((S[r] / S[l]) ** delta for l in range(n)) for r in range(n)])
    return p, pp, q


def hessian_bruteforce(x, beta: float, delta: float, k: int) -> np.ndarray:
    """Hessian from enumerated weights, entry by entry."""
    p, pp, q = weights_bruteforce(x, beta, delta, k)
    n, m = p.shape
    H = np.zeros((n * m, n * m))
    for i1, i2, j1, j2 in itertools.product(range(n), range(m), range(n), range(m)):
        v = delta * p[i1, i2] * p[j1, j2] / (q[i1] * q[j1])
        if i1 == j1:
            v += (-(1 + delta) * p[i1, i2] * p[j1, j2] + pp[i1, i2, j2]) / q[i1]
        H[i1 * m + i2, j1 * m + j2] = beta * v
    return H


def central_diff(fun, x, h_scale: float = 1e-5) -> np.ndarray:
    """Central differences of scalar or array valued ``fun`` in every entry of ``x``."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    cols = []
    for a in range(flat.size):
        h = h_scale * (1.0 + abs(flat[a]))
        xp, xm = flat.copy(), flat.copy()
        xp[a] += h
        xm[a] -= h
        cols.append((np.asarray(fun(xp.reshape(x.shape))) - np.asarray(fun(xm.reshape(x.shape)))) / (2 * h))
    return np.array(cols)


def ks_bruteforce(a, b) -> float:
    """Sup of ``|F_a - F_b|`` checked at every sample point and just left of it."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    pts = np.concatenate([a, b])
    best = 0.0
    for t in pts:
        best = max(best, abs(np.mean(a <= t) - np.mean(b <= t)), abs(np.mean(a < t) - np.mean(b < t)))
    return best


def levy_bruteforce(v, eps: float) -> float:
    """Largest fraction of points inside some ``[v_i, v_j]`` with ``v_j - v_i <= 2 eps``.

    A closed window of width ``2 eps`` can always be slid so that its left
    end hits a data point, so these intervals realise the supremum.
    """
    v = np.asarray(v, float)
    best = 0
    for lo in v:
        for hi in v:
            if lo <= hi and hi - lo <= 2 * eps:
                best = max(best, int(np.sum((v >= lo) & (v <= hi))))
    return best / v.size


def expected_abs_chi2_1_minus_1() -> float:
    """``E|Z^2 - 1|`` for standard ``Z``: ``4 phi(1)`` in closed form."""
    return 4.0 * math.exp(-0.5) / math.sqrt(2 * math.pi)
