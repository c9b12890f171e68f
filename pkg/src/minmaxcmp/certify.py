"""Certificate suites: Monte Carlo and analytic checks with explicit margins.

Each suite returns a :class:`SuiteReport` whose records carry every number
needed to audit the verdict (bound, estimates, margins).  Thresholds come
from the packaged ``defaults.json`` and may be overridden per call.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import bounds, chaos2, covlab, leadlag, montecarlo, softminmax
from .covlab import DomainError, GaussianMatrixSpec, MatrixShape, SeedSpec, as_seed
from .softminmax import SmoothParams


def load_defaults(path=None) -> dict:
    if path is None:
        text = resources.files("minmaxcmp").joinpath("data/defaults.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)


def merged(section: str, overrides: dict | None = None, defaults: dict | None = None) -> dict:
    d = copy.deepcopy(defaults or load_defaults())
    cfg = dict(d[section])
    cfg.setdefault("sigma_margin", d.get("sigma_margin", 4.0))
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    return cfg


@dataclass
class SuiteReport:
    suite: str
    config: dict
    records: list = field(default_factory=list)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r["passed"]]

    @property
    def passed(self) -> bool:
        return bool(self.records) and not self.failures

    def add(self, name: str, passed: bool, **numbers) -> None:
        self.records.append({"name": name, "passed": bool(passed), **numbers})

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "config": self.config,
            "n_records": len(self.records),
            "n_failures": len(self.failures),
            "records": self.records,
        }


def _fd_step(v: float) -> float:
    return 1e-5 * (1.0 + abs(v))


def softmax_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    """Sandwich, Hessian row sums, sign pattern, absolute-sum bound, finite differences."""
    cfg = merged("softmax", overrides, defaults)
    rep = SuiteReport("softmax", cfg)
    rng = as_seed(seed).rng(0)
    worst = {"sandwich": -math.inf, "rowsum": 0.0, "sign": 0.0, "absbound": -math.inf, "grad_fd": 0.0, "hess_fd": 0.0}
    for _ in range(int(cfg["trials"])):
        n = int(rng.integers(1, cfg["max_n"] + 1))
        m = int(rng.integers(1, cfg["max_m"] + 1))
        k = int(rng.integers(1, m + 1))
        p = SmoothParams(float(rng.uniform(*cfg["beta_range"])), float(rng.uniform(*cfg["delta_range"])), k)
        x = rng.normal(0.0, float(rng.uniform(0.1, 3.0)), (n, m))
        fv = softminmax.f_value(x, p)
        hard = softminmax.min_sum_topk(x, k)
        lo, hi = softminmax.sandwich_gaps(n, m, p)
        # float roundoff only; equality is attained when n = 1 and k = m
        slack = cfg["sandwich_rel_slack"] * (1.0 + abs(hard))
        worst["sandwich"] = max(worst["sandwich"], ((fv - lo) - hard) - slack, (hard - (fv + hi)) - slack)
        w = softminmax.weight_tables(x, p)
        H = softminmax._hessian_from_weights(w, p)
        worst["rowsum"] = max(worst["rowsum"], float(np.abs(H.sum(axis=1)).max()))
        rows = np.repeat(np.arange(n), m)
        same = rows[:, None] == rows[None, :]
        off = ~np.eye(n * m, dtype=bool)
        v1 = float(np.max(H[same & off], initial=-np.inf))
        v2 = float(-np.min(H[~same], initial=np.inf))
        worst["sign"] = max(worst["sign"], v1, v2)
        total = float(np.abs(H[off]).sum())
        worst["absbound"] = max(worst["absbound"], total - softminmax.absbound(n, m, p))
        g = (w.p / w.q[:, None]).reshape(-1)
        flat = x.reshape(-1)
        fd = np.empty(n * m)
        for a in range(n * m):
            h = _fd_step(flat[a])
            xp, xm = flat.copy(), flat.copy()
            xp[a] += h
            xm[a] -= h
            fd[a] = (softminmax.f_value(xp.reshape(n, m), p) - softminmax.f_value(xm.reshape(n, m), p)) / (2 * h)
        worst["grad_fd"] = max(worst["grad_fd"], float(np.abs(fd - g).max()))
        scale = max(1.0, float(np.abs(H).max()))
        cols = rng.choice(n * m, size=min(n * m, int(cfg["hess_fd_columns"])), replace=False)
        for a in cols:
            h = _fd_step(flat[a])
            xp, xm = flat.copy(), flat.copy()
            xp[a] += h
            xm[a] -= h
            col = (softminmax.gradient(xp.reshape(n, m), p) - softminmax.gradient(xm.reshape(n, m), p)).reshape(-1) / (2 * h)
            worst["hess_fd"] = max(worst["hess_fd"], float(np.abs(col - H[:, a]).max()) / scale)
    rep.add("sandwich", worst["sandwich"] <= 0.0, worst_violation=worst["sandwich"])
    rep.add("hessian_rowsum", worst["rowsum"] <= cfg["rowsum_tol"], worst=worst["rowsum"], tol=cfg["rowsum_tol"])
    rep.add("hessian_signs", worst["sign"] <= cfg["sign_slack"], worst=worst["sign"], tol=cfg["sign_slack"])
    rep.add("abs_offdiag_bound", worst["absbound"] <= cfg["absbound_slack"], worst_excess=worst["absbound"])
    rep.add("gradient_fd", worst["grad_fd"] <= cfg["grad_fd_tol"], worst=worst["grad_fd"], tol=cfg["grad_fd_tol"])
    rep.add("hessian_fd", worst["hess_fd"] <= cfg["hess_fd_tol"], worst=worst["hess_fd"], tol=cfg["hess_fd_tol"])
    return rep


def _mean_gap_record(sx, sy, k, reps, seed: SeedSpec, threads, stream: int):
    ex = montecarlo.estimate_min_sum_topk(sx, k, reps, seed.child(2 * stream), threads)
    ey = montecarlo.estimate_min_sum_topk(sy, k, reps, seed.child(2 * stream + 1), threads)
    return ex, ey, math.hypot(ex.stderr, ey.stderr)


def gordon_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    """Expected min-of-top-k gap of random equal-mean pairs against the closed-form bound."""
    cfg = merged("gordon", overrides, defaults)
    rep = SuiteReport("gordon", cfg)
    seed = as_seed(seed)
    rng = seed.rng(0)
    for t in range(int(cfg["pairs"])):
        n = int(rng.integers(1, cfg["max_n"] + 1))
        m = int(rng.integers(1, cfg["max_m"] + 1))
        k = int(rng.integers(1, m + 1))
        sx, sy = covlab.random_spec_pair(n, m, rng)
        gamma = covlab.gamma_discrepancy(sx, sy)
        bound = bounds.gordon_bound(n, m, k, gamma).value
        ex, ey, se = _mean_gap_record(sx, sy, k, int(cfg["reps"]), seed, threads, t)
        gap = abs(ex.mean - ey.mean)
        margin = cfg["sigma_margin"] * (ex.stderr + ey.stderr)
        rep.add(
            f"pair_{t}",
            gap <= bound + margin,
            n=n, m=m, k=k, gamma=gamma, bound=bound, mean_x=ex.mean, mean_y=ey.mean,
            stderr_x=ex.stderr, stderr_y=ey.stderr, gap=gap, margin=margin,
        )
    return rep


def monotone_pair(n: int, m: int, rng: np.random.Generator, t: float | None = None):
    """Equal-mean pair satisfying the one-sided comparison sign condition.

    ``X`` adds a shared row factor (raises cross-row increments only); ``Y``
    adds independent within-row noise ``t P`` (raises same-row increments and
    cross-row ones by at most ``2 t max diag P``).
    """
    N = n * m
    base = covlab.random_cov(N, rng)
    mean = rng.standard_normal(N)
    t = float(rng.uniform(0.2, 2.0)) if t is None else t
    P = covlab.random_cov(m, rng, (0.0, 0.5))
    u = t * float(np.max(np.diag(P)))
    covX = base + u * np.kron(np.eye(n), np.ones((m, m)))
    covY = base + t * np.kron(np.eye(n), P)
    shape = MatrixShape(n, m)
    return GaussianMatrixSpec(shape, mean, covX), GaussianMatrixSpec(shape, mean.copy(), covY)


def monotone_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    cfg = merged("monotone", overrides, defaults)
    rep = SuiteReport("monotone", cfg)
    seed = as_seed(seed)
    rng = seed.rng(0)
    for t in range(int(cfg["pairs"])):
        n = int(rng.integers(1, cfg["max_n"] + 1))
        m = int(rng.integers(1, cfg["max_m"] + 1))
        k = int(rng.integers(1, m + 1))
        sx, sy = monotone_pair(n, m, rng)
        cond = bounds.comparison_condition(sx, sy, tol=1e-12)
        ex, ey, se = _mean_gap_record(sx, sy, k, int(cfg["reps"]), seed, threads, t)
        margin = cfg["sigma_margin"] * se
        rep.add(
            f"pair_{t}",
            cond.holds and ex.mean <= ey.mean + margin,
            n=n, m=m, k=k, condition=cond.holds, mean_x=ex.mean, mean_y=ey.mean, margin=margin,
        )
    return rep


def order_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    """Lift exactness on random vectors and the order-statistic bound certificate."""
    cfg = merged("order", overrides, defaults)
    rep = SuiteReport("order", cfg)
    seed = as_seed(seed)
    rng = seed.rng(0)
    mismatches = 0
    checked = 0
    for _ in range(int(cfg["vectors"])):
        d = int(rng.integers(1, cfg["max_d"] + 1))
        x = rng.standard_normal(d)
        srt = np.sort(x)
        for h in range(1, d + 1):
            checked += 1
            if softminmax.minmax(bounds.lift_values(x, h)) != srt[h - 1]:
                mismatches += 1
    rep.add("lift_exactness", mismatches == 0, checked=checked, mismatches=mismatches)
    reps = int(cfg["reps"])
    for t in range(int(cfg["pairs"])):
        d = int(rng.integers(2, cfg["max_d"] + 1))
        sw, sz = covlab.random_spec_pair(1, d, rng)
        gamma = covlab.gamma_discrepancy(sw, sz)
        w = montecarlo.statistic_values(sw, lambda a: np.sort(a[:, 0, :], axis=-1), reps, seed.child(2 * t), threads)
        z = montecarlo.statistic_values(sz, lambda a: np.sort(a[:, 0, :], axis=-1), reps, seed.child(2 * t + 1), threads)
        for h in range(1, d + 1):
            sw_h = montecarlo.SampleStats.from_values(w[:, h - 1])
            sz_h = montecarlo.SampleStats.from_values(z[:, h - 1])
            bound = bounds.order_stat_bound(d, h, gamma).value
            gap = abs(sw_h.mean - sz_h.mean)
            margin = cfg["sigma_margin"] * (sw_h.stderr + sz_h.stderr)
            rep.add(f"pair_{t}_h{h}", gap <= bound + margin, d=d, h=h, gamma=gamma, bound=bound, gap=gap, margin=margin)
    return rep


def random_floor_spec(n: int, m: int, rng: np.random.Generator, floor: float, tries: int = 1000) -> GaussianMatrixSpec:
    """Random spec (generator of ``random_spec_pair``) with all entry std at least ``floor``."""
    for _ in range(tries):
        N = n * m
        spec = GaussianMatrixSpec(MatrixShape(n, m), rng.standard_normal(N), covlab.random_cov(N, rng))
        if float(spec.std.min()) >= floor:
            return spec
    raise DomainError(f"could not draw a spec with sigma floor {floor}")


def anticoncentration_bound(n: int, m: int, sigma_min: float) -> float:
    return 2.0 * math.sqrt(2.0) * (n / sigma_min) * (math.sqrt(2.0) + math.sqrt(math.log(m)))


def anticoncentration_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    cfg = merged("anticoncentration", overrides, defaults)
    rep = SuiteReport("anticoncentration", cfg)
    seed = as_seed(seed)
    rng = seed.rng(0)
    reps = int(cfg["reps"])
    noise = montecarlo.ks_noise(reps)
    for t in range(int(cfg["specs"])):
        n = int(rng.integers(1, cfg["max_n"] + 1))
        m = int(rng.integers(2, cfg["max_m"] + 1))
        spec = random_floor_spec(n, m, rng, cfg["sigma_floor"])
        smin = float(spec.std.min())
        bound = anticoncentration_bound(n, m, smin)
        sample = montecarlo.minmax_sample(spec, reps, seed.child(t), threads)
        ratios = []
        for eps in cfg["eps"]:
            r = montecarlo.levy_concentration(sample, eps) / eps
            ratios.append(r)
            margin = cfg["noise_units"] * noise / eps
            rep.add(f"spec_{t}_eps{eps}", r <= bound + margin, n=n, m=m, sigma_min=smin, eps=eps, ratio=r, bound=bound, margin=margin)
        spread = max(ratios) / min(ratios) - 1.0
        rep.add(f"spec_{t}_stability", spread <= cfg["stability"], spread=spread, ratios=ratios)
    return rep


def sharpness_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    """Duplicated-column matrices versus the zero matrix: gap of order ``sqrt(2 log n)``."""
    cfg = merged("sharpness", overrides, defaults)
    rep = SuiteReport("sharpness", cfg)
    seed = as_seed(seed)
    lo, hi = cfg["range"]
    for t, n in enumerate(cfg["ns"]):
        spec = montecarlo.sharpness_columns_spec(int(n), int(cfg["m"]))
        est = montecarlo.estimate_min_sum_topk(spec, 1, int(cfg["reps"]), seed.child(t), threads)
        ratio = abs(est.mean) / math.sqrt(2.0 * math.log(n))
        rep.add(f"n_{n}", lo <= ratio <= hi, n=int(n), gap=abs(est.mean), stderr=est.stderr, ratio=ratio)
    return rep


def chaos_algebra_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    """Exact covariance, fourth cumulant and duality identity against Monte Carlo."""
    cfg = merged("chaos_algebra", overrides, defaults)
    rep = SuiteReport("chaos_algebra", cfg)
    seed = as_seed(seed)
    z = cfg["moment_sigma"]
    chi = chaos2.QuadraticFormMatrixSpec(MatrixShape(1, 1), np.eye(3)[None, None])
    v, k4 = float(chaos2.covariance_exact(chi)[0, 0]), chaos2.fourth_cumulant_exact(chi, 0)
    rep.add("chi2_3_exact", v == 6.0 and k4 == 144.0, variance=v, kappa4=k4)
    rng = seed.rng(0)
    d, n, m = int(cfg["d"]), int(cfg["n"]), int(cfg["m"])
    A = rng.standard_normal((n, m, d, d)) / math.sqrt(d)
    S = covlab.random_cov(d, rng, (0.5, 1.0))
    spec = chaos2.QuadraticFormMatrixSpec(MatrixShape(n, m), A, S)
    exact = chaos2.covariance_exact(spec)
    N = n * m

    def moments(rng_, size):
        f = spec.draw(rng_, size).reshape(size, N)
        prod = f[:, :, None] * f[:, None, :]
        return prod.sum(axis=0), (prod * prod).sum(axis=0)

    reps = int(cfg["cov_reps"])
    parts = covlab.map_blocks(moments, reps, seed.child(1), threads=threads)
    s1, s2 = sum(p[0] for p in parts), sum(p[1] for p in parts)
    mean = s1 / reps
    se = np.sqrt(np.clip(s2 / reps - mean**2, 0, None) / reps)
    zc = float(np.max(np.abs(mean - exact) / se))
    rep.add("covariance_mc", zc <= z, max_z=zc, threshold=z)
    kreps = int(cfg["kappa_reps"])
    vals = chaos2.chaos_sample(spec, kreps, seed.child(2)).reshape(kreps, N)
    kz = []
    for a in range(N):
        est = chaos2.empirical_kappa4(vals[:, a])
        kz.append(abs(est.mean - chaos2.fourth_cumulant_exact(spec, a)) / est.stderr)
    del vals
    rep.add("kappa4_mc", max(kz) <= z, max_z=float(max(kz)), threshold=z)
    mean_d, se_d, ex_d = chaos2.duality_check(spec, int(cfg["duality_reps"]), seed.child(3))
    zd = float(np.max(np.abs(mean_d - ex_d) / se_d))
    rep.add("duality", zd <= cfg["sigma_margin"], max_z=zd, threshold=cfg["sigma_margin"])
    return rep


def chaos_scaling_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None, base=None) -> SuiteReport:
    """KS distance along the fixed-covariance family: slope and monotonicity."""
    cfg = merged("chaos", overrides, defaults)
    rep = SuiteReport("chaos", cfg)
    seed = as_seed(seed)
    if base is None:
        base = chaos2.rank_one_spec(int(cfg["n"]), int(cfg["m"]), int(cfg["d"]), seed.rng(0))
    rows = chaos2.scaling_experiment(base, int(cfg["steps"]), int(cfg["copies"]), int(cfg["reps"]), seed.child(1))
    k4 = np.array([r["kappa4_max"] for r in rows])
    ks = np.array([r["ks"] for r in rows])
    noise = rows[0]["noise"]
    decades = float(np.log10(k4.max() / k4.min()))
    slope = chaos2.loglog_slope(k4, ks)
    need = cfg["slope_target"] - cfg["slope_slack"]
    rises = float(np.max(np.diff(ks)) / noise)
    rep.add("kappa4_span", decades >= cfg["min_decades"], decades=decades)
    rep.add("loglog_slope", slope >= need, slope=slope, threshold=need)
    rep.add("monotone", rises <= cfg["monotone_units"], worst_rise_units=rises, rows=rows)
    return rep


def leadlag_config(cfg: dict, corr=None) -> leadlag.LeadLagConfig:
    corr = default_leadlag_corr() if corr is None else corr
    T = float(cfg["T"])
    return leadlag.LeadLagConfig(
        T, float(cfg["b"]), float(cfg["w"]), int(cfg["Ns"][0]), tuple(leadlag.default_theta_grid(T, int(cfg["m"]))), corr
    )


def default_leadlag_corr() -> np.ndarray:
    """Null structure with correlated rows: ``corr(B1, B2) = corr(Bt1, Bt2) = 0.5``."""
    c = np.eye(4)
    c[0, 1] = c[1, 0] = c[2, 3] = c[3, 2] = 0.5
    return c


def leadlag_suite(overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None, config=None) -> SuiteReport:
    cfg = merged("leadlag", overrides, defaults)
    rep = SuiteReport("leadlag", cfg)
    config = config or leadlag_config(cfg)
    rows = leadlag.convergence_experiment(config, cfg["Ns"], int(cfg["reps"]), seed, int(cfg["moment_reps"]))
    res = leadlag.ks_trend_test(
        [r["N"] for r in rows], [r["ks"] for r in rows], int(cfg["reps"]), cfg["signal_units"], cfg["drop_units"]
    )
    trend = {k: v for k, v in res.to_dict().items() if k != "passed"}
    rep.add("ks_trend", res.passed, rows=rows, **trend)
    return rep


SUITES = {
    "softmax": softmax_suite,
    "gordon": gordon_suite,
    "monotone": monotone_suite,
    "order": order_suite,
    "anticoncentration": anticoncentration_suite,
    "sharpness": sharpness_suite,
    "chaos-algebra": chaos_algebra_suite,
    "chaos": chaos_scaling_suite,
    "leadlag": leadlag_suite,
}


def run_suite(name: str, overrides=None, seed: SeedSpec | int = 0, threads=None, defaults=None) -> SuiteReport:
    try:
        fn = SUITES[name]
    except KeyError:
        raise DomainError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(overrides, seed, threads, defaults)
