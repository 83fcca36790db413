import json

import numpy as np
import pytest

from toruslab import (
    NoPositiveExponents,
    ReportConfig,
    continue_periodic,
    entropy_balance_check,
    exponent_field,
    orbit_exponents,
    periodic_data_spread,
    pesin_entropy,
    report_from_json_dict,
    rigidity_report,
)

FAST = dict(
    seed=5,
    exponent_samples=4,
    exponent_steps=4000,
    burn_in=500,
    max_period=2,
    cone_resolution=8,
    residual_grid=8,
    claim_halflength=0.05,
    ubd_scales=(0.2, 0.1),
    ubd_samples_per_scale=2,
    cocycle_pairs=3,
    cocycle_n_max=50,
    expansion_samples=10,
    expansion_steps=50,
)


@pytest.fixture(scope="module")
def fast_config():
    return ReportConfig(**FAST)


@pytest.fixture(scope="module")
def linear_report(lin_map, fast_config):
    return rigidity_report(lin_map, fast_config)


@pytest.fixture(scope="module")
def smc_report(smc_map, fast_config):
    return rigidity_report(smc_map, fast_config)


@pytest.fixture(scope="module")
def post_report(post_map_offset, fast_config):
    return rigidity_report(post_map_offset, fast_config)


class TestPesinEntropy:
    def test_reference_value(self, lin_map, root_oracle):
        est = orbit_exponents(lin_map, [0.3, 0.7, 0.11], steps=2000)
        expected = np.log(root_oracle[1]) + np.log(root_oracle[2])
        assert abs(pesin_entropy(est) - expected) < 2e-3
        assert abs(pesin_entropy(est) - 1.6192) < 2e-3

    def test_smooth_conjugate_same_value(self, smc_map, root_oracle):
        est = orbit_exponents(smc_map, [0.3, 0.7, 0.11], steps=20000)
        expected = np.log(root_oracle[1]) + np.log(root_oracle[2])
        assert abs(pesin_entropy(est) - expected) < 4e-3

    def test_no_positive_exponents(self):
        with pytest.raises(NoPositiveExponents):
            pesin_entropy(np.array([-1.0, -0.5, -0.1]))


class TestEntropyBalance:
    def test_linear_exact(self, lin_map, a7):
        summary = periodic_data_spread(lin_map, 2)
        check = entropy_balance_check(summary, a7, tol=1e-6)
        assert check.status == "pass"
        assert check.residual < 1e-10

    def test_smooth_conjugate(self, smc_map, a7):
        summary = periodic_data_spread(smc_map, 2)
        check = entropy_balance_check(summary, a7, tol=1e-6)
        assert check.status == "pass"
        assert check.residual < 1e-6

    def test_generic_not_applicable(self, post_map_offset, a7):
        summary = periodic_data_spread(post_map_offset, 2)
        check = entropy_balance_check(summary, a7, tol=1e-6)
        assert check.status == "not_applicable"


class TestRigidityReport:
    def test_linear_all_pass(self, linear_report):
        assert linear_report.overall == "rigid_evidence"
        for key in ("P1", "P2", "P3", "P4", "P5", "P6"):
            assert linear_report.predicates[key]["status"] == "pass", key

    def test_smooth_conjugate_passes(self, smc_report):
        assert smc_report.overall == "rigid_evidence"
        assert smc_report.predicates["P1"]["status"] == "pass"
        assert smc_report.predicates["P2"]["status"] == "pass"
        assert smc_report.sections["conjugacy"]["ground_truth_deviation"] < 1e-6

    def test_generic_family_flagged(self, post_report, post_map_offset, a7):
        assert post_report.overall == "non_rigid_evidence"
        assert post_report.predicates["P2"]["status"] == "fail"
        # P2 deviation agrees with the fixed-point eigenvalue oracle
        orbit = continue_periodic(post_map_offset, np.zeros(3), 1)
        eigs = np.sort(np.log(np.abs(np.linalg.eigvals(
            post_map_offset.derivative(orbit.points[0])))))
        oracle_dev = np.abs(eigs - a7.log_moduli).max()
        reported = post_report.predicates["P2"]["value"]
        assert reported >= oracle_dev - 1e-6

    def test_gate_logic(self, linear_report, smc_report, post_report):
        for report in (linear_report, smc_report, post_report):
            if report.overall == "rigid_evidence":
                assert report.predicates["P1"]["status"] == "pass"
                assert report.predicates["P2"]["status"] == "pass"
                assert report.sections["entropy"]["balance_status"] == "pass"

    def test_exponents_consistent_with_periodic_data(self, smc_report):
        mean = np.asarray(smc_report.sections["exponents"]["mean"])
        periodic = np.asarray(smc_report.sections["periodic"]["mean"])
        assert np.abs(mean - periodic).max() < 5e-3

    def test_pesin_within_slack(self, linear_report, smc_report):
        for report in (linear_report, smc_report):
            assert report.sections["entropy"]["pesin_within_slack"]

    def test_p6_gated_on_p1(self, post_map_offset):
        # force P1 to fail by tightening its tolerance; the density
        # derivative check must then be reported as not applicable
        config = ReportConfig(**{**FAST, "tol_exponent": 1e-5})
        report = rigidity_report(post_map_offset, config)
        assert report.predicates["P1"]["status"] == "fail"
        assert report.predicates["P6"]["status"] == "not_applicable"
        assert report.overall == "non_rigid_evidence"

    def test_deterministic(self, lin_map, fast_config):
        a = rigidity_report(lin_map, fast_config)
        b = rigidity_report(lin_map, fast_config)
        dump = lambda r: json.dumps(r.to_json_dict(), sort_keys=True)
        assert dump(a) == dump(b)

    def test_thread_count_does_not_change_results(self, lin_map):
        one = rigidity_report(lin_map, ReportConfig(**{**FAST, "threads": 1}))
        four = rigidity_report(lin_map, ReportConfig(**{**FAST, "threads": 4}))
        strip = lambda r: json.dumps(
            {**r.to_json_dict(), "config": None}, sort_keys=True
        )
        assert strip(one) == strip(four)

    def test_json_round_trip(self, linear_report):
        clone = report_from_json_dict(
            json.loads(json.dumps(linear_report.to_json_dict()))
        )
        assert clone.overall == linear_report.overall
        for key, pred in linear_report.predicates.items():
            assert clone.predicates[key]["status"] == pred["status"]

    def test_every_verdict_carries_tolerance(self, linear_report):
        for key, pred in linear_report.predicates.items():
            if pred["status"] in ("pass", "fail"):
                assert "tolerance" in pred, key
