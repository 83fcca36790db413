import numpy as np
import pytest

from toruslab import (
    ConjugacyApprox,
    InversionDiverged,
    SegmentTooShort,
    center_derivative_check,
    conjugacy_residual,
    continue_periodic,
    evaluate_h,
    holder_probe,
    integrate_leaf,
    leaf_density_profile,
    solve_conjugacy,
    torus_distance,
    wrap,
)
from conftest import phi_chain

GRID16 = (
    np.stack(np.meshgrid(*[np.arange(16) / 16.0] * 3, indexing="ij"), -1)
    .reshape(-1, 3)
)


class TestSolveConjugacy:
    def test_linear_gives_identity(self, lin_map):
        conj = solve_conjugacy(lin_map, 1e-12)
        assert conj.truncation == (0, 0, 0)
        assert conj.tail_bound == 0.0
        x = np.random.default_rng(0).random((20, 3))
        assert np.abs(conj.displacement_field(x)).max() == 0.0
        assert torus_distance(evaluate_h(conj, x), x).max() == 0.0

    @pytest.mark.parametrize("family", ["post_map", "smc_map"])
    def test_residual_below_tail_budget(self, family, request):
        f = request.getfixturevalue(family)
        conj = solve_conjugacy(f, 1e-12)
        assert conj.tail_bound < 1e-12
        assert conjugacy_residual(conj, 16) < 2 * conj.tolerance

    def test_truncation_doubling_changes_nothing(self, post_map):
        conj = solve_conjugacy(post_map, 1e-12)
        doubled = ConjugacyApprox(
            map=post_map,
            truncation=tuple(2 * k for k in conj.truncation),
            tail_bound=conj.tail_bound,
            tolerance=conj.tolerance,
        )
        x = np.random.default_rng(1).random((100, 3))
        change = np.abs(conj.displacement_field(x) - doubled.displacement_field(x))
        assert change.max() < 1e-12

    def test_displacement_periodic(self, post_map):
        conj = solve_conjugacy(post_map, 1e-12)
        # dyadic points: the shifted lift wraps back to identical floats
        x = np.random.default_rng(2).integers(0, 1024, (20, 3)) / 1024.0
        shift = np.array([1.0, -2.0, 3.0])
        diff = conj.displacement_field(x) - conj.displacement_field(x + shift)
        assert np.abs(diff).max() < 1e-12

    def test_displacement_periodic_generic_lift(self, post_map):
        # at generic lifts the wrap differs by one ulp; the response is
        # bounded by u's own Holder modulus at that scale
        conj = solve_conjugacy(post_map, 1e-12)
        x = np.random.default_rng(2).random((20, 3))
        shift = np.array([1.0, -2.0, 3.0])
        diff = conj.displacement_field(x) - conj.displacement_field(x + shift)
        assert np.abs(diff).max() < 1e-5

    def test_eps_linearity(self, a7, base_shear):
        from toruslab import make_da_map

        sups = {}
        for eps in (0.05, 0.025):
            f = make_da_map(a7, [base_shear], eps, "post_composed")
            conj = solve_conjugacy(f, 1e-12)
            sups[eps] = np.abs(conj.displacement_field(GRID16)).max()
        assert 1.8 < sups[0.05] / sups[0.025] < 2.2


class TestGroundTruthRecovery:
    @pytest.mark.parametrize("family", ["smc_map", "smc_map_two"])
    def test_h_equals_phi_on_grid(self, family, request):
        f = request.getfixturevalue(family)
        conj = solve_conjugacy(f, 1e-12)
        h = evaluate_h(conj, GRID16)
        phi = wrap(phi_chain(f, GRID16))
        assert torus_distance(h, phi).max() < 10 * 1e-12


class TestEvaluateH:
    def test_inverse_roundtrip_smooth(self, smc_map):
        conj = solve_conjugacy(smc_map, 1e-12)
        x = np.random.default_rng(3).random((100, 3))
        back = evaluate_h(conj, evaluate_h(conj, x), "inverse")
        assert torus_distance(back, x).max() < 1e-10

    def test_inverse_diverges_outside_contraction_regime(self, post_map):
        # the generic family is only Holder: the fixed-point iteration
        # stalls and must report it rather than return a wrong answer
        conj = solve_conjugacy(post_map, 1e-12)
        x = np.random.default_rng(4).random((10, 3))
        with pytest.raises(InversionDiverged):
            evaluate_h(conj, x, "inverse")

    def test_fixed_point_maps_to_origin(self, post_map_offset):
        orbit = continue_periodic(post_map_offset, np.zeros(3), 1)
        conj = solve_conjugacy(post_map_offset, 1e-12)
        image = evaluate_h(conj, orbit.points[0])
        assert torus_distance(image, np.zeros(3)) < 1e-8


class TestCenterDerivative:
    def test_linear_exact(self, lin_map):
        segment = integrate_leaf(lin_map, [0.2, 0.5, 0.8], "wu", 0.1)
        profile = leaf_density_profile(lin_map, segment, 1e-8)
        conj = solve_conjugacy(lin_map, 1e-12)
        stats = center_derivative_check(conj, segment, profile)
        assert stats.max_deviation < 1e-10

    def test_smooth_conjugate_matches_density(self, smc_map):
        segment = integrate_leaf(smc_map, [0.31, 0.62, 0.17], "wu", 0.1)
        profile = leaf_density_profile(smc_map, segment, 1e-8)
        conj = solve_conjugacy(smc_map, 1e-12)
        stats = center_derivative_check(conj, segment, profile)
        assert stats.max_deviation < 1e-2

    def test_short_segment_rejected(self, lin_map):
        segment = integrate_leaf(lin_map, [0.2, 0.5, 0.8], "wu", 0.1)
        from toruslab import LeafSegment

        stub = LeafSegment(
            bundle="wu",
            points=segment.points[:5],
            arclength=segment.arclength[:5],
            map=lin_map,
        )
        profile_stub = leaf_density_profile(lin_map, segment, 1e-8)
        conj = solve_conjugacy(lin_map, 1e-12)
        with pytest.raises(SegmentTooShort):
            center_derivative_check(conj, stub, profile_stub)

    def test_wrong_bundle_rejected(self, lin_map):
        segment = integrate_leaf(lin_map, [0.2, 0.5, 0.8], "su", 0.1)
        profile = leaf_density_profile(lin_map, segment, 1e-8)
        conj = solve_conjugacy(lin_map, 1e-12)
        with pytest.raises(ValueError):
            center_derivative_check(conj, segment, profile)


class TestHolderProbe:
    def test_linear_reports_one(self, lin_map):
        conj = solve_conjugacy(lin_map, 1e-10)
        probe = holder_probe(conj, [0.1, 0.05, 0.025], samples=10, seed=5)
        assert probe == {"s": 1.0, "wu": 1.0, "su": 1.0}

    def test_smooth_conjugate_near_lipschitz(self, smc_map):
        conj = solve_conjugacy(smc_map, 1e-10)
        probe = holder_probe(conj, [0.1, 0.05, 0.025, 0.0125], samples=100, seed=5)
        assert min(probe.values()) >= 0.95

    def test_generic_family_is_rougher(self, post_map):
        conj = solve_conjugacy(post_map, 1e-10)
        probe = holder_probe(conj, [0.1, 0.05, 0.025, 0.0125], samples=100, seed=5)
        assert probe["su"] < 0.8

    def test_deterministic(self, post_map):
        conj = solve_conjugacy(post_map, 1e-10)
        a = holder_probe(conj, [0.1, 0.05, 0.025], samples=20, seed=6)
        b = holder_probe(conj, [0.1, 0.05, 0.025], samples=20, seed=6)
        assert a == b

    def test_scale_validation(self, lin_map):
        conj = solve_conjugacy(lin_map, 1e-10)
        with pytest.raises(ValueError):
            holder_probe(conj, [0.1, 0.2, 0.3], samples=5, seed=0)
