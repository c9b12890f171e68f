import json
import math

import numpy as np
import pytest

from minmaxcmp.covlab import DomainError
from minmaxcmp.leadlag import (
    FMatrixSampler,
    LeadLagConfig,
    SignedSampler,
    convergence_experiment,
    default_theta_grid,
    exact_column_covariances,
    exact_covariance,
    f_matrix_sample,
    ks_trend_test,
    matched_gaussian_columns,
    mc_column_covariances,
    overlap_pairs,
    overlap_pairs_bruteforce,
    simulate_paths,
    _paths,
    u_statistic,
)
from minmaxcmp.montecarlo import ks_distance, ks_noise


def _corr(r_b=0.5, r_w=0.5):
    c = np.eye(4)
    c[0, 1] = c[1, 0] = r_b
    c[2, 3] = c[3, 2] = r_w
    return c


def _cfg(N=20, b=0.3, w=0.45, theta=(-0.1, 0.0, 0.15), corr=None, **kw):
    return LeadLagConfig(1.0, b, w, N, theta, _corr() if corr is None else corr, **kw)


class TestConfig:
    def test_grid_sizes(self):
        c = LeadLagConfig(1.0, 0.1, 0.15, 100, default_theta_grid(1.0, 8))
        assert (c.nb, c.nw, c.m) == (10, 15, 8)
        assert c.times_B()[-1] == pytest.approx(1.0)

    def test_floor_tolerates_roundoff(self):
        assert 0.29 * 100 < 29
        assert LeadLagConfig(1.0, 0.29, 0.5, 100, (0.0, 0.1)).nb == 29

    def test_default_grid(self):
        g = default_theta_grid(2.0, 5)
        assert g[0] == -0.5 and g[-1] == 0.5 and len(g) == 5
        with pytest.raises(DomainError):
            default_theta_grid(1.0, 1)

    @pytest.mark.parametrize(
        "kw",
        [
            {"T": 0.0},
            {"b": -1.0},
            {"N": 0},
            {"N": 2.5},
            {"b": 0.01, "N": 10},
            {"theta_grid": (0.0,)},
        ],
    )
    def test_validation(self, kw):
        args = {"T": 1.0, "b": 0.5, "w": 0.5, "N": 10, "theta_grid": (0.0, 0.1)}
        args.update(kw)
        with pytest.raises(DomainError):
            LeadLagConfig(**args)

    def test_corr_validation(self):
        bad = np.eye(4)
        bad[0, 2] = bad[2, 0] = 0.3
        with pytest.raises(DomainError):
            _cfg(corr=bad)
        _cfg(corr=bad, allow_rho=True)
        with pytest.raises(DomainError):
            _cfg(corr=2 * np.eye(4))
        with pytest.raises(DomainError):
            _cfg(corr=np.eye(3))

    def test_roundtrip(self, tmp_path):
        c = _cfg()
        path = tmp_path / "ll.json"
        path.write_text(json.dumps(c.to_dict()))
        back = LeadLagConfig.load(path)
        assert back.to_dict() == c.to_dict()

    def test_from_dict_defaults(self):
        c = LeadLagConfig.from_dict({"b": 0.5, "w": 0.5})
        assert c.m == 8 and c.N == 100 and c.T == 1.0
        with pytest.raises(DomainError):
            LeadLagConfig.from_dict({"w": 0.5})


class TestOverlap:
    def test_against_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            T = float(rng.uniform(0.5, 2.0))
            N = int(rng.integers(1, 40))
            b, w = rng.uniform(0.05, 1.5, 2)
            if math.floor(b * N + 1e-9) < 1 or math.floor(w * N + 1e-9) < 1:
                continue
            c = LeadLagConfig(T, b, w, N, (0.0, 0.1))
            tb, tw = c.times_B(), c.times_W()
            np.testing.assert_array_equal(overlap_pairs(tb, tw), overlap_pairs_bruteforce(tb, tw))

    def test_shared_endpoints_do_not_overlap(self):
        tb = np.array([0.0, 1.0, 2.0])
        tw = np.array([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(overlap_pairs(tb, tw), [[0, 0], [1, 1]])

    def test_single_intervals(self):
        np.testing.assert_array_equal(overlap_pairs(np.array([0.0, 1.0]), np.array([0.0, 0.4])), [[0, 0]])
        assert overlap_pairs(np.array([0.0, 1.0]), np.array([1.0, 2.0])).shape == (0, 2)


class TestSimulation:
    def test_u_matches_definition(self):
        c = _cfg()
        obs = simulate_paths(c, 3)
        brute = overlap_pairs_bruteforce(obs.times_B, obs.times_W)
        for k, theta in enumerate(c.theta_grid):
            for a in (1, 2):
                direct = sum(obs.dB[i, a - 1] * obs.dW[k, j, a - 1] for i, j in brute)
                assert u_statistic(obs, theta, a) == pytest.approx(direct, abs=1e-12)

    def test_u_errors(self):
        obs = simulate_paths(_cfg(), 0)
        with pytest.raises(DomainError):
            u_statistic(obs, 0.0, 3)
        with pytest.raises(DomainError):
            u_statistic(obs, 0.33, 1)

    def test_zero_lag_equal_grids_is_realized_variance(self):
        corr = np.eye(4)
        corr[0, 2] = corr[2, 0] = 1.0
        c = LeadLagConfig(1.0, 0.5, 0.5, 40, (0.0, 0.2), corr, allow_rho=True)
        obs = simulate_paths(c, 1)
        np.testing.assert_allclose(obs.dW[0, :, 0], obs.dB[:, 0], atol=1e-7)
        rv = float(np.sum(obs.dB[:, 0] ** 2))
        assert u_statistic(obs, 0.0, 1) == pytest.approx(rv, rel=1e-6)

    def test_increment_variances(self):
        c = _cfg(N=10)
        lay = SignedSampler(c).layout
        Z = _paths(lay, np.random.default_rng(0), 20000)
        var = np.diff(Z[:, lay.idx_B, 0], axis=1).var(axis=0)
        np.testing.assert_allclose(var, 1 / (c.b * c.N), rtol=0.05)

    def test_null_mean_zero(self):
        x = np.concatenate([SignedSampler(_cfg()).draw(np.random.default_rng(s), 5000) for s in range(4)])
        se = x.std(axis=0) / math.sqrt(x.shape[0])
        assert np.all(np.abs(x.mean(axis=0)) <= 4.5 * se)

    def test_f_matrix_nonnegative_and_seeded(self):
        a = f_matrix_sample(_cfg(), 300, 2)
        assert a.shape == (300, 2, 3) and np.all(a >= 0)
        np.testing.assert_array_equal(a, f_matrix_sample(_cfg(), 300, 2))

    def test_reps_zero(self):
        with pytest.raises(DomainError):
            f_matrix_sample(_cfg(), 0, 0)


class TestCovariance:
    def test_hand_value(self):
        # equal grids, independent coordinates: var(sqrt(N) U) = N * nb * (T / (bN))^2
        c = LeadLagConfig(1.0, 0.5, 0.5, 20, (0.0, 0.3))
        assert exact_covariance(c)[0, 0] == pytest.approx(c.nb / (c.b**2 * c.N), rel=1e-12)

    def test_against_monte_carlo(self):
        c = _cfg(N=10)
        cov, se = mc_column_covariances(c, 200_000, 5)
        assert np.all(np.abs(cov - exact_column_covariances(c)) <= 5 * se)

    def test_full_matrix_against_monte_carlo(self):
        c = _cfg(N=10, corr=_corr(0.7, -0.4))
        x = np.concatenate([SignedSampler(c).draw(np.random.default_rng(s), 50_000) for s in range(4)]).reshape(-1, 2 * c.m)
        prod = x[:, :, None] * x[:, None, :]
        se = prod.std(axis=0) / math.sqrt(x.shape[0])
        assert np.all(np.abs(prod.mean(axis=0) - exact_covariance(c)) <= 5 * se + 1e-12)

    def test_identity_corr_gives_diagonal_columns(self):
        cc = exact_column_covariances(_cfg(corr=np.eye(4)))
        assert np.all(cc[:, 0, 1] == 0.0)

    def test_repeated_theta(self):
        cc = exact_column_covariances(_cfg(theta=(0.1, 0.1, -0.2)))
        np.testing.assert_array_equal(cc[0], cc[1])

    def test_psd(self):
        w = np.linalg.eigvalsh(exact_covariance(_cfg()))
        assert w.min() >= -1e-10 * w.max()

    def test_mc_needs_two_reps(self):
        with pytest.raises(DomainError):
            mc_column_covariances(_cfg(), 1, 0)


class TestMatching:
    def test_exact_method(self):
        m = matched_gaussian_columns(_cfg(), 0, 0, method="exact")
        cov = m.spec.cov
        k = _cfg().m
        assert cov[0, 1] == 0.0 and cov[0, k] == pytest.approx(m.column_cov[0, 0, 1])

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            matched_gaussian_columns(_cfg(), 10, 0, method="bogus")

    def test_sampler_nonnegative(self):
        m = matched_gaussian_columns(_cfg(), 0, 0, method="exact")
        assert np.all(m.sampler.draw(np.random.default_rng(0), 100) >= 0)


class TestExperiment:
    def test_rows_and_determinism(self):
        c = _cfg()
        rows = convergence_experiment(c, [10, 20], 500, 4, moment_reps=2000)
        assert [r["N"] for r in rows] == [10, 20]
        assert set(rows[0]) == {"N", "m", "reps", "ks", "shape", "seed"}
        assert rows == convergence_experiment(c, [10, 20], 500, 4, moment_reps=2000)

    @pytest.mark.parametrize("Ns", [[], [20, 10], [10, 10]])
    def test_bad_N_list(self, Ns):
        with pytest.raises(DomainError):
            convergence_experiment(_cfg(), Ns, 10, 0)

    def test_self_distance(self):
        a = FMatrixSampler(_cfg()).draw(np.random.default_rng(0), 200).max(axis=-1).min(axis=-1)
        assert ks_distance(a, a) == 0.0


class TestTrend:
    def test_decreasing(self):
        r = ks_trend_test([50, 100, 200, 400], [0.4, 0.2, 0.1, 0.05], 20000)
        assert r.passed and r.spearman == pytest.approx(-1.0)

    def test_increasing_fails(self):
        assert not ks_trend_test([50, 100, 200], [0.05, 0.1, 0.2], 20000).passed

    def test_flat_at_noise_passes(self):
        noise = ks_noise(1000, 1000)
        assert ks_trend_test([10, 20, 40], [noise, noise, noise], 1000).passed

    def test_big_but_flat_fails(self):
        assert not ks_trend_test([10, 20, 40], [0.3, 0.3, 0.3], 20000).passed
