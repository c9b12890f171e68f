import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxcmp.covlab import (
    DomainError,
    GaussianMatrixSpec,
    MatrixShape,
    NotPSDError,
    SeedSpec,
    block_sizes,
    cholesky_psd,
    gamma_discrepancy,
    increment_matrix,
    increment_variance,
    map_blocks,
    random_cov,
    random_spec_pair,
    sample,
)


class TestMatrixShape:
    def test_row_major_index(self):
        s = MatrixShape(3, 4)
        assert s.idx(0, 0) == 0
        assert s.idx(1, 0) == 4
        assert s.idx(2, 3) == 11
        assert s.pair(7) == (1, 3)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            MatrixShape(2, 2).idx(2, 0)
        with pytest.raises(DomainError):
            MatrixShape(0, 2)


class TestSpec:
    def test_shape_checks(self):
        with pytest.raises(DomainError):
            GaussianMatrixSpec(MatrixShape(2, 2), np.zeros(3), np.eye(4))
        with pytest.raises(DomainError):
            GaussianMatrixSpec(MatrixShape(2, 2), np.zeros(4), np.eye(3))

    def test_asymmetric_rejected(self):
        c = np.eye(2)
        c[0, 1] = 0.5
        with pytest.raises(DomainError):
            GaussianMatrixSpec(MatrixShape(1, 2), np.zeros(2), c)

    def test_json_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        spec, _ = random_spec_pair(2, 3, rng)
        path = tmp_path / "s.json"
        spec.dump(path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"n", "m", "mean", "cov"}
        back = GaussianMatrixSpec.load(path)
        np.testing.assert_array_equal(back.cov, spec.cov)
        np.testing.assert_array_equal(back.mean, spec.mean)

    def test_malformed_dict(self):
        with pytest.raises(DomainError):
            GaussianMatrixSpec.from_dict({"n": 1})


class TestIncrements:
    def test_iid_increment_is_two(self):
        spec = GaussianMatrixSpec.iid(2, 2)
        assert increment_variance(spec, 0, 3) == 2.0
        assert increment_variance(spec, 1, 1) == 0.0

    def test_perfect_correlation_gives_zero(self):
        spec = GaussianMatrixSpec(MatrixShape(1, 2), np.zeros(2), np.ones((2, 2)))
        assert increment_variance(spec, 0, 1) == 0.0

    def test_gamma_self_zero(self):
        spec, _ = random_spec_pair(2, 3, np.random.default_rng(0))
        assert gamma_discrepancy(spec, spec) == 0.0

    def test_gamma_matches_pairwise_definition(self):
        sx, sy = random_spec_pair(2, 2, np.random.default_rng(1))
        brute = max(
            abs(increment_variance(sx, a, b) - increment_variance(sy, a, b)) for a in range(4) for b in range(4)
        )
        assert gamma_discrepancy(sx, sy) == pytest.approx(brute, abs=1e-14)

    def test_increment_matrix_diagonal_zero(self):
        g = increment_matrix(random_cov(5, np.random.default_rng(2)))
        np.testing.assert_allclose(np.diag(g), 0.0, atol=1e-12)


class TestCholesky:
    def test_full_rank_reconstructs(self):
        c = random_cov(6, np.random.default_rng(4))
        f = cholesky_psd(c)
        assert f.rank == 6
        np.testing.assert_allclose(f.reconstruct(), c, atol=1e-12)

    def test_rank_deficient(self):
        v = np.random.default_rng(5).standard_normal((5, 2))
        c = v @ v.T
        f = cholesky_psd(c)
        assert f.rank == 2
        np.testing.assert_allclose(f.reconstruct(), c, atol=1e-10)

    def test_lower_is_triangular_in_pivot_order(self):
        f = cholesky_psd(random_cov(4, np.random.default_rng(6)))
        np.testing.assert_allclose(np.triu(f.lower, 1), 0.0)

    def test_indefinite_reports_pivot(self):
        with pytest.raises(NotPSDError) as exc:
            cholesky_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert exc.value.min_pivot == pytest.approx(-3.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_random_psd_always_factors(self, N, s):
        c = random_cov(N, np.random.default_rng(s))
        np.testing.assert_allclose(cholesky_psd(c).reconstruct(), c, atol=1e-10)


class TestSampling:
    def test_seed_determinism(self):
        spec, _ = random_spec_pair(2, 2, np.random.default_rng(0))
        a = sample(spec, 11, 5000)
        b = sample(spec, 11, 5000)
        np.testing.assert_array_equal(a, b)

    def test_thread_count_invariance(self):
        one = np.concatenate(map_blocks(lambda r, s: r.standard_normal(s), 10000, SeedSpec(3), block=1000, threads=1))
        four = np.concatenate(map_blocks(lambda r, s: r.standard_normal(s), 10000, SeedSpec(3), block=1000, threads=4))
        np.testing.assert_array_equal(one, four)

    def test_block_sizes(self):
        assert block_sizes(10, 4) == [4, 4, 2]
        assert block_sizes(8, 4) == [4, 4]

    def test_moments(self):
        spec, _ = random_spec_pair(1, 3, np.random.default_rng(7))
        x = sample(spec, 1, 200000).reshape(-1, 3)
        se = np.sqrt(np.diag(spec.cov) / x.shape[0])
        assert np.all(np.abs(x.mean(axis=0) - spec.mean) <= 5 * se)
        np.testing.assert_allclose(np.cov(x.T), spec.cov, atol=0.05)

    def test_zero_covariance_is_deterministic(self):
        spec = GaussianMatrixSpec(MatrixShape(2, 2), np.arange(4.0), np.zeros((4, 4)))
        x = sample(spec, 0, 10)
        np.testing.assert_array_equal(x, np.broadcast_to(np.arange(4.0).reshape(2, 2), (10, 2, 2)))

    def test_distinct_streams_differ(self):
        s = SeedSpec(1)
        assert s.child(0) != s.child(1)
        assert not np.array_equal(s.child(0).rng(0).standard_normal(3), s.child(1).rng(0).standard_normal(3))
