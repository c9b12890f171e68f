"""Closed-form comparison bounds and the order-statistic lift."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .covlab import DomainError, GaussianMatrixSpec, MatrixShape, increment_matrix
from .softminmax import SmoothParams, log_binom

BETA_CAP = 1e6
LIFT_ROW_CAP = 10**6


@dataclass(frozen=True)
class BoundReport:
    """A bound value with its named summands and any optimizing parameters."""

    name: str
    value: float
    components: dict = field(default_factory=dict)
    params_used: dict | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "components": dict(self.components),
            "params_used": self.params_used,
        }


def _lbinom(m: int, k: int) -> float:
    return max(float(log_binom(m, k)), 0.0)


def _check_nmk(n: int, m: int, k: int) -> None:
    if n < 1 or m < 1 or not 1 <= k <= m:
        raise DomainError(f"need n >= 1 and 1 <= k <= m, got n={n}, m={m}, k={k}")


def gordon_bound(n: int, m: int, k: int, gamma: float) -> BoundReport:
    """Bound on the gap between expected min-of-top-k-sums of two Gaussian matrices."""
    _check_nmk(n, m, k)
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    row = math.sqrt(k * (1 - 1 / n) * (2 - 1 / m) * math.log(n)) if n > 1 else 0.0
    col = math.sqrt((1 - k / m) * _lbinom(m, k)) if k < m else 0.0
    s = math.sqrt(gamma * k)
    used = None
    if gamma > 0:
        opt = optimal_smooth_params(n, m, k, gamma)
        used = {"beta": opt.beta, "delta": opt.delta, "k": k}
    return BoundReport(
        "gordon",
        s * (row + col),
        {"row_term": s * row, "column_term": s * col, "gamma": gamma},
        used,
    )


def chatterjee_bound(m: int, gamma: float) -> BoundReport:
    """The classical vector-maximum bound ``sqrt(gamma log m)``."""
    if m < 1 or gamma < 0:
        raise DomainError(f"need m >= 1 and gamma >= 0, got m={m}, gamma={gamma}")
    return BoundReport("chatterjee", math.sqrt(gamma * math.log(m)), {"gamma": gamma})


def optimal_smooth_params(n: int, m: int, k: int, gamma: float) -> SmoothParams:
    """Minimizer of the pre-optimization bound over ``(beta, delta)``.

    ``n = 1`` fixes ``delta = 1`` (the row term vanishes); ``k = m`` has no
    finite optimal ``beta`` and returns ``BETA_CAP``.
    """
    _check_nmk(n, m, k)
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0:
        raise DomainError("gamma = 0: the bound is 0 and no smoothing parameters are needed")
    lb = _lbinom(m, k)
    if k == m:
        beta = BETA_CAP
    else:
        beta = 2.0 * math.sqrt(m * lb / ((m - k) * k * gamma))
    if n == 1:
        delta = 1.0
    elif k == m:
        # delta -> 0 trades the vanishing column term; any fixed value is admissible
        delta = 1.0
    else:
        a_n = 1 - 1 / n
        delta = math.sqrt((m - k) * math.log(n) / (k * a_n * (2 * m - 1) * lb))
    return SmoothParams(beta, delta, k)


def preoptimized_bound(n: int, m: int, gamma: float, params: SmoothParams) -> float:
    """Interpolation bound for fixed ``(beta, delta)`` before optimization."""
    k, b, d = params.k, params.beta, params.delta
    a_n = 1 - 1 / n
    return (
        b * k / (4 * m) * (m - k + a_n * (2 * m - 1) * k * d) * gamma
        + math.log(n) / (b * d)
        + _lbinom(m, k) / b
    )


def order_stat_bound(d: int, h: int, gamma: float) -> BoundReport:
    """Bound on the gap between expected ``h``-th smallest coordinates."""
    if not 1 <= h <= d:
        raise DomainError(f"need 1 <= h <= d, got d={d}, h={h}")
    if gamma < 0:
        raise DomainError(f"gamma must be nonnegative, got {gamma}")
    sg = math.sqrt(gamma)
    lb = _lbinom(d, h)
    main = sg * (math.sqrt(2 * lb) + math.sqrt(math.log(h)))
    explicit = sg * (math.sqrt(2 * h * (1 + math.log(d / h))) + math.sqrt(math.log(h)))
    lift = gordon_bound(math.comb(d, h), h, 1, gamma).value
    return BoundReport(
        "order_stat",
        main,
        {
            "binomial_term": sg * math.sqrt(2 * lb),
            "log_h_term": sg * math.sqrt(math.log(h)),
            "explicit_form": explicit,
            "lift_gordon": lift,
            "gamma": gamma,
        },
    )


def lift_index(d: int, h: int, cap: int = LIFT_ROW_CAP) -> np.ndarray:
    """Rows of all ``h``-subsets of ``range(d)`` in lexicographic order."""
    if not 1 <= h <= d:
        raise DomainError(f"need 1 <= h <= d, got d={d}, h={h}")
    rows = math.comb(d, h)
    if rows > cap:
        raise MemoryError(f"lift would need {rows} rows (cap {cap})")
    return np.array(list(itertools.combinations(range(d), h)), dtype=np.intp).reshape(rows, h)


def order_stat_lift(spec: GaussianMatrixSpec, h: int, cap: int = LIFT_ROW_CAP) -> GaussianMatrixSpec:
    """Matrix law whose min-max equals the ``h``-th smallest coordinate of a vector.

    Row ``r`` holds the coordinates of the ``r``-th ``h``-subset, so the
    lifted covariance is the vector covariance pulled back along that map.
    """
    if spec.n != 1:
        raise DomainError(f"lift expects a 1 x d vector spec, got {spec.n} x {spec.m}")
    idx = lift_index(spec.m, h, cap)
    flat = idx.reshape(-1)
    return GaussianMatrixSpec(
        MatrixShape(idx.shape[0], h), spec.mean[flat], spec.cov[np.ix_(flat, flat)]
    )


def lift_values(x, h: int) -> np.ndarray:
    """Lift a vector (or stack of vectors) to the ``C(d, h) x h`` matrix."""
    x = np.asarray(x, dtype=float)
    return x[..., lift_index(x.shape[-1], h)]


@dataclass(frozen=True)
class ComparisonResult:
    holds: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.holds


def comparison_condition(specX: GaussianMatrixSpec, specY: GaussianMatrixSpec, tol: float = 0.0) -> ComparisonResult:
    """Sign condition for the one-sided comparison of expectations.

    Same-row increments of ``X`` must not exceed those of ``Y``; cross-row
    increments of ``X`` must not fall below.  On failure the witness is the
    first violating ``((i1, i2), (j1, j2))`` pair in flat order.
    """
    if specX.shape != specY.shape:
        raise DomainError(f"shape mismatch: {specX.shape} vs {specY.shape}")
    gX, gY = increment_matrix(specX.cov), increment_matrix(specY.cov)
    n, m = specX.n, specX.m
    rows = np.repeat(np.arange(n), m)
    same = rows[:, None] == rows[None, :]
    bad = np.where(same, gX > gY + tol, gX < gY - tol)
    if not bad.any():
        return ComparisonResult(True)
    a, b = np.argwhere(bad)[0]
    return ComparisonResult(False, (divmod(int(a), m), divmod(int(b), m)))


def _check_delta(delta_hat: float) -> None:
    if delta_hat < 0 or not np.isfinite(delta_hat):
        raise DomainError(f"Delta must be finite and nonnegative, got {delta_hat}")


def theorem3a_bound(delta_hat: float, alpha_nm: float, n: int, m: int) -> BoundReport:
    """Constant-free shape of the Kolmogorov bound with the ``alpha`` / ``log p`` factor."""
    _check_delta(delta_hat)
    if n * m < 2:
        raise DomainError("need n*m >= 2 so that log(nm) > 0")
    if delta_hat == 0:
        return BoundReport("kolmogorov_a", 0.0, {"max_term": math.nan})
    lnm = math.log(n * m)
    p_nm = n / lnm
    members = {
        "one": 1.0,
        "alpha_sq": alpha_nm**2,
        "log_p": math.log(p_nm),
        "log_inv_delta": math.log(1 / delta_hat),
    }
    mx = max(members.values())
    value = mx ** (1 / 3) * n ** (2 / 3) * lnm ** (1 / 3) * delta_hat ** (1 / 3)
    return BoundReport("kolmogorov_a", value, {"max_term": mx, "p_nm": p_nm, **members})


def theorem3b_bound(delta_hat: float, n: int, m: int) -> BoundReport:
    """Constant-free shape ``n^(2/3) (log m)^(1/3) (log nm)^(1/3) Delta^(1/3)``."""
    _check_delta(delta_hat)
    if m < 2:
        raise DomainError("need m >= 2 so that log m > 0")
    value = n ** (2 / 3) * math.log(m) ** (1 / 3) * math.log(n * m) ** (1 / 3) * delta_hat ** (1 / 3)
    return BoundReport("kolmogorov_b", value, {"delta": delta_hat})
