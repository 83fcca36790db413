import numpy as np
import pytest

from toruslab import bundle_vectors, cone_certificate, finite_time_frame, invariance_residual, make_da_map
from toruslab.splitting import _angles
from conftest import phi_chain

BUNDLES = ("s", "wu", "su")


class TestFiniteTimeFrame:
    def test_linear_frame_is_eigenbasis(self, lin_map, a7):
        frame = finite_time_frame(lin_map, [0.3, 0.7, 0.1], depth=5)
        for i, b in enumerate(BUNDLES):
            cross = np.linalg.norm(np.cross(frame.vector(b), a7.right_eigenvectors[:, i]))
            assert cross < 1e-10
        assert frame.residuals.max() < 1e-10

    def test_linear_unit_norms(self, lin_map):
        frame = finite_time_frame(lin_map, [0.11, 0.52, 0.93], depth=3)
        for b in BUNDLES:
            assert abs(np.linalg.norm(frame.vector(b)) - 1.0) < 1e-12

    def test_depth_zero_rejected(self, lin_map):
        with pytest.raises(ValueError):
            finite_time_frame(lin_map, [0.1, 0.2, 0.3], depth=0)

    def test_perturbed_residuals_small_at_depth_40(self, post_map):
        frame = finite_time_frame(post_map, [0.37, 0.21, 0.66], depth=40)
        assert frame.residuals.max() < 1e-3

    def test_smooth_conjugate_center_matches_closed_form(self, smc_map, a7):
        rng = np.random.default_rng(11)
        pts = rng.random((20, 3))
        _, e_wu, _ = bundle_vectors(smc_map, pts, depth=40)
        # center bundle of phi^-1 A phi is Dphi^-1 at phi(x) applied to the
        # linear center direction
        c = 2 * np.pi * 0.05 * np.cos(2 * np.pi * phi_chain(smc_map, pts)[:, 1])
        oracle = np.tile(a7.right_eigenvectors[:, 1], (20, 1)).astype(float)
        oracle[:, 0] -= c * a7.right_eigenvectors[1, 1]
        oracle /= np.linalg.norm(oracle, axis=1)[:, None]
        assert _angles(e_wu, oracle).max() < 1e-3

    def test_frame_vectors_independent(self, post_map):
        rng = np.random.default_rng(12)
        es, ewu, esu = bundle_vectors(post_map, rng.random((50, 3)), depth=40)
        dets = np.abs(np.linalg.det(np.stack([es, ewu, esu], axis=-1)))
        assert dets.min() > 0.01

    def test_sign_convention_stable_nearby(self, post_map):
        rng = np.random.default_rng(13)
        x = rng.random((20, 3))
        y = x + rng.normal(scale=3e-4, size=(20, 3))
        fx = bundle_vectors(post_map, x, depth=40)
        fy = bundle_vectors(post_map, y, depth=40)
        for ex, ey in zip(fx, fy):
            # signed angle: the convention must not flip between neighbors
            dots = np.sum(ex * ey, axis=1)
            assert dots.min() > np.cos(0.1)


class TestInvarianceResidual:
    def test_linear_exact(self, lin_map):
        stats = invariance_residual(lin_map, samples=100, depth=10, seed=0)
        assert max(stats[b]["max"] for b in BUNDLES) < 1e-10

    @pytest.mark.parametrize("family", ["post_map", "smc_map"])
    def test_residual_decays_with_depth(self, family, request):
        f = request.getfixturevalue(family)
        res = {d: invariance_residual(f, samples=100, depth=d, seed=1) for d in (10, 20, 40, 80)}
        for b in BUNDLES:
            for d in (10, 20, 40):
                # 1e-12 guard: deep residuals sit at the roundoff floor
                assert res[2 * d][b]["max"] <= max(res[d][b]["max"], 1e-12)
        assert max(res[40][b]["max"] for b in BUNDLES) < 1e-3

    def test_deterministic(self, post_map):
        a = invariance_residual(post_map, samples=30, depth=20, seed=9)
        b = invariance_residual(post_map, samples=30, depth=20, seed=9)
        assert a == b

    def test_sample_validation(self, lin_map):
        with pytest.raises(ValueError):
            invariance_residual(lin_map, samples=0, depth=10, seed=0)


class TestConeCertificate:
    def test_linear_certifies(self, lin_map):
        cert = cone_certificate(lin_map, 16, 0.5)
        assert cert.verdict
        assert min(cert.margins.values()) > 0.0

    def test_small_perturbation_certifies(self, post_map):
        cert = cone_certificate(post_map, 32, 0.5)
        assert cert.verdict
        assert min(cert.margins.values()) > 0.0

    def test_resolution_oracle_agreement(self, post_map):
        coarse = cone_certificate(post_map, 32, 0.5)
        fine = cone_certificate(post_map, 64, 0.5)
        assert coarse.verdict == fine.verdict
        for key in coarse.margins:
            assert abs(coarse.margins[key] - fine.margins[key]) < 0.05

    def test_huge_perturbation_fails(self, a7, base_shear):
        f = make_da_map(a7, [base_shear], 10.0, "post_composed")
        cert = cone_certificate(f, 16, 0.5)
        assert not cert.verdict
        assert min(cert.margins.values()) < 0.0

    def test_resolution_validation(self, lin_map):
        with pytest.raises(ValueError):
            cone_certificate(lin_map, 4, 0.5)

    def test_serializable(self, lin_map):
        import json

        cert = cone_certificate(lin_map, 8, 0.5)
        parsed = json.loads(json.dumps(cert.to_dict()))
        assert parsed["verdict"] is True
