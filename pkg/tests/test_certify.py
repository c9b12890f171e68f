import json

import numpy as np
import pytest

from minmaxcmp import bounds, certify
from minmaxcmp.covlab import DomainError


class TestPlumbing:
    def test_defaults_sections(self):
        d = certify.load_defaults()
        assert d["version"] == 1
        for name in ("softmax", "gordon", "monotone", "order", "anticoncentration", "sharpness", "chaos", "chaos_algebra", "leadlag"):
            assert name in d

    def test_merged_overrides(self):
        cfg = certify.merged("gordon", {"pairs": 3, "reps": None})
        assert cfg["pairs"] == 3 and cfg["reps"] == certify.load_defaults()["gordon"]["reps"]
        assert cfg["sigma_margin"] == 4.0

    def test_custom_defaults_file(self, tmp_path):
        d = certify.load_defaults()
        d["sharpness"]["reps"] = 123
        path = tmp_path / "d.json"
        path.write_text(json.dumps(d))
        assert certify.load_defaults(path)["sharpness"]["reps"] == 123

    def test_empty_report_is_not_a_pass(self):
        assert not certify.SuiteReport("x", {}).passed

    def test_unknown_suite(self):
        with pytest.raises(DomainError):
            certify.run_suite("bogus")

    def test_report_json(self):
        rep = certify.run_suite("sharpness", {"ns": [16], "reps": 500}, seed=1)
        doc = json.loads(json.dumps(rep.to_dict()))
        assert doc["suite"] == "sharpness" and doc["n_records"] == 1


class TestSuitesSmall:
    @pytest.mark.parametrize(
        "name,overrides",
        [
            ("softmax", {"trials": 30}),
            ("gordon", {"pairs": 3, "reps": 5000}),
            ("monotone", {"pairs": 3, "reps": 5000}),
            ("order", {"vectors": 50, "pairs": 2, "reps": 5000}),
            ("anticoncentration", {"specs": 2, "reps": 50000}),
            ("sharpness", {"ns": [16, 64], "reps": 2000}),
            ("chaos-algebra", {"cov_reps": 50000, "kappa_reps": 200000, "duality_reps": 20000}),
            ("chaos", {"reps": 4000, "steps": 4, "slope_slack": 0.5, "monotone_units": 4.0}),
        ],
    )
    def test_passes(self, name, overrides):
        rep = certify.run_suite(name, overrides, seed=3)
        assert rep.passed, rep.failures

    def test_leadlag_small(self):
        rep = certify.run_suite("leadlag", {"Ns": [50, 100], "reps": 1000, "moment_reps": 5000}, seed=3)
        rec = rep.records[0]
        assert rec["name"] == "ks_trend" and len(rec["rows"]) == 2
        assert rec["rows"][0]["ks"] > rec["rows"][1]["ks"]

    def test_seed_determinism(self):
        a = certify.run_suite("gordon", {"pairs": 2, "reps": 2000}, seed=5)
        b = certify.run_suite("gordon", {"pairs": 2, "reps": 2000}, seed=5, threads=4)
        assert a.to_dict() == b.to_dict()


class TestSuitesDetectFailure:
    def test_sharpness_wrong_range(self):
        rep = certify.run_suite("sharpness", {"ns": [64], "reps": 2000, "range": [2.0, 3.0]})
        assert not rep.passed

    def test_softmax_impossible_tolerance(self):
        rep = certify.run_suite("softmax", {"trials": 5, "grad_fd_tol": 0.0})
        assert [r["name"] for r in rep.failures] == ["gradient_fd"]


class TestMonotonePair:
    def test_condition_one_sided(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            sx, sy = certify.monotone_pair(3, 4, rng)
            assert bounds.comparison_condition(sx, sy, tol=1e-12).holds
            assert not bounds.comparison_condition(sy, sx, tol=1e-12).holds
            np.testing.assert_array_equal(sx.mean, sy.mean)


class TestAnticoncentrationHelpers:
    def test_floor(self):
        spec = certify.random_floor_spec(2, 3, np.random.default_rng(0), 0.5)
        assert spec.std.min() >= 0.5

    def test_bound_value(self):
        assert certify.anticoncentration_bound(1, 1, 1.0) == pytest.approx(4.0)
