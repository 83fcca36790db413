"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines and timings.  Budgets are asserted against wall-clock time.
"""

import filecmp
import json
import os
import time

import numpy as np
import pytest

from toruslab import (
    ReportConfig,
    cocycle_ratio_statistic,
    conjugacy_residual,
    delta_density_ratio,
    entropy_balance_check,
    equivariance_check,
    evaluate_h,
    integrate_leaf,
    leaf_density_profile,
    center_derivative_check,
    make_da_map,
    orbit_exponents,
    periodic_data_spread,
    periodic_points_linear,
    pesin_entropy,
    rigidity_report,
    solve_conjugacy,
    torus_distance,
    ubd_statistic,
    wrap,
)
from toruslab.cli import run_experiment, validate_config
from toruslab.rigidity import _center_growth
from conftest import A7

X0 = np.array([0.3, 0.7, 0.11])


class Stopwatch:
    def __init__(self, budget):
        self.budget = budget
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def done(self, number, message):
        elapsed = self.elapsed
        print(f"ACCEPTANCE {number}: PASS ({elapsed:.1f}s < {self.budget}s) {message}")
        assert elapsed < self.budget, f"criterion {number} exceeded {self.budget}s"


def test_criterion_01_linear_spectrum(lin_map, root_oracle):
    watch = Stopwatch(5.0)
    est = orbit_exponents(lin_map, X0, steps=100000)
    frozen = np.array([-1.6190, 0.4415, 1.1777])
    assert np.abs(np.log(root_oracle) - frozen).max() < 2.5e-4
    dev = np.abs(est.values - frozen).max()
    assert dev < 1e-3
    watch.done(1, f"QR exponents {np.round(est.values, 5)} within 1e-3 of oracle")


def test_criterion_02_zero_sum(lin_map, post_map, smc_map):
    total = 0.0
    worst = 0.0
    for name, f in (("linear", lin_map), ("post", post_map), ("smooth", smc_map)):
        watch = Stopwatch(10.0)
        est = orbit_exponents(f, X0, steps=100000)
        assert abs(est.exponent_sum) < 1e-3, name
        worst = max(worst, abs(est.exponent_sum))
        assert watch.elapsed < 10.0, name
        total += watch.elapsed
    print(f"ACCEPTANCE 2: PASS ({total:.1f}s, <10s per map) max |sum| = {worst:.2e}")


def test_criterion_03_periodic_counts(a7, post_map_offset):
    watch = Stopwatch(30.0)
    counts = [len(periodic_points_linear(a7, p)) for p in (1, 2, 3)]
    assert counts == [1, 13, 91]
    summary = periodic_data_spread(post_map_offset, 3)
    assert summary.count == 105
    assert not summary.failures
    worst = max(o.newton_residual for o in summary.orbits)
    assert worst < 1e-12
    watch.done(3, f"counts {counts}, all continued, max residual {worst:.1e}")


def test_criterion_04_conjugacy_soundness(a7, base_shear, post_map, smc_map, lin_map):
    watch = Stopwatch(60.0)
    residuals = {}
    for name, f in (("post", post_map), ("smooth", smc_map)):
        conj = solve_conjugacy(f, 1e-12)
        residuals[name] = conjugacy_residual(conj, 16)
        assert residuals[name] < 1e-8, name
    frozen_eps0 = make_da_map(a7, [base_shear], 0.0, "post_composed")
    conj0 = solve_conjugacy(frozen_eps0, 1e-12)
    x = np.random.default_rng(0).random((512, 3))
    assert np.abs(conj0.displacement_field(x)).max() == 0.0
    watch.done(4, f"residuals {residuals}, eps=0 gives u == 0")


def test_criterion_05_ground_truth_recovery(smc_map):
    watch = Stopwatch(120.0)
    report = rigidity_report(smc_map, ReportConfig(seed=2))
    dev = report.sections["conjugacy"]["ground_truth_deviation"]
    assert dev < 1e-6
    spread = max(report.sections["periodic"]["spread"])
    assert spread < 1e-9
    assert report.overall == "rigid_evidence"
    watch.done(5, f"|h - phi| = {dev:.1e}, spread {spread:.1e}, rigid_evidence")


def test_criterion_06_density_machinery(lin_map, smc_map, a7):
    watch = Stopwatch(120.0)
    # exact identities on the linear map
    assert delta_density_ratio(lin_map, X0, X0, "wu", 1e-8) == 1.0
    y = wrap(X0 + 0.15 * a7.right_eigenvectors[:, 1])
    pair = delta_density_ratio(lin_map, X0, y, "wu", 1e-8, search_halflength=0.25)
    assert abs(pair - 1.0) < 1e-12
    stat = ubd_statistic(lin_map, "wu", [0.4, 0.2, 0.1], 20, seed=3)
    assert abs(stat.K_global - 1.0) < 1e-9
    coc = cocycle_ratio_statistic(lin_map, "wu", 10, 300, seed=5)
    assert coc.sup_ratio == 1.0 and coc.inf_ratio == 1.0
    # pushforward identity with refinement oracle
    seg = integrate_leaf(smc_map, X0, "su", 0.1, 1e-3)
    res = equivariance_check(smc_map, seg, 1e-6)
    assert res < 1e-3
    seg_half = integrate_leaf(smc_map, X0, "su", 0.1, 5e-4)
    res_half = equivariance_check(smc_map, seg_half, 5e-7)
    assert res_half <= 0.5 * res
    watch.done(
        6, f"K = {stat.K_global}, equivariance {res:.1e} -> {res_half:.1e}"
    )


def test_criterion_07_center_derivative(smc_map):
    watch = Stopwatch(60.0)
    segment = integrate_leaf(smc_map, X0, "wu", 0.25, 1e-3)
    profile = leaf_density_profile(smc_map, segment, 1e-8)
    conj = solve_conjugacy(smc_map, 1e-12)
    stats = center_derivative_check(conj, segment, profile)
    assert stats.max_deviation < 1e-2
    watch.done(7, f"h' vs rho max deviation {stats.max_deviation:.1e} on length 0.5")


def test_criterion_08_entropy_identities(lin_map, smc_map, a7, root_oracle):
    watch = Stopwatch(30.0)
    expected = float(np.log(root_oracle[1:]).sum())
    assert abs(expected - 1.6192) < 5e-4
    for name, f, steps in (("linear", lin_map, 2000), ("smooth", smc_map, 20000)):
        est = orbit_exponents(f, X0, steps=steps)
        assert abs(pesin_entropy(est) - 1.6192) < 5e-3, name
    summary = periodic_data_spread(smc_map, 2)
    check = entropy_balance_check(summary, a7, tol=1e-6)
    assert check.status == "pass"
    assert check.residual < 1e-6
    watch.done(8, f"Pesin sum = {expected:.4f}, balance residual {check.residual:.1e}")


def test_criterion_09_uniform_expansion(post_map, smc_map, a7):
    watch = Stopwatch(30.0)
    threshold = a7.log_moduli[1] / 2.0
    worst = np.inf
    for f in (post_map, smc_map):
        growth = _center_growth(f, samples=100, steps=200, seed=4, depth=40)
        worst = min(worst, growth.min())
        assert growth.min() > threshold
    watch.done(9, f"min center growth {worst:.4f} > {threshold:.4f}")


def test_criterion_10_determinism_and_runtime(tmp_path):
    watch = Stopwatch(600.0)
    # default-budget report on the generic family, via the CLI layer
    raw = {
        "schema_version": 1,
        "map": {
            "matrix": A7,
            "shears": [
                {"axis": 0, "wave_vector": [0, 1, 0], "amplitude": 1.0, "phase": 1.1}
            ],
            "eps_scale": 0.05,
            "mode": "post_composed",
        },
        "analyses": ["report"],
        "seed": 7,
        "out_dir": str(tmp_path / "full"),
    }
    assert run_experiment(validate_config(raw)) == 0
    assert (tmp_path / "full" / "report.json").exists()

    # byte-identical repetition on a reduced config
    small = dict(raw)
    small["budgets"] = {
        "exponent_samples": 3, "exponent_steps": 2000, "burn_in": 300,
        "max_period": 2, "cone_resolution": 8, "residual_grid": 8,
        "claim_halflength": 0.05, "ubd_scales": [0.2, 0.1],
        "ubd_samples_per_scale": 2, "cocycle_pairs": 2, "cocycle_n_max": 30,
        "expansion_samples": 5, "expansion_steps": 30,
    }
    dirs = []
    for run in ("a", "b"):
        cfg = dict(small)
        cfg["out_dir"] = str(tmp_path / run)
        assert run_experiment(validate_config(cfg)) == 0
        dirs.append(tmp_path / run)
    names = sorted(os.listdir(dirs[0]))
    for name in names:
        assert filecmp.cmp(dirs[0] / name, dirs[1] / name, shallow=False), name
    watch.done(10, f"default report + byte-identical reruns ({len(names)} files)")
