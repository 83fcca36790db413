"""Entropy identities and the aggregated rigidity verdict.

rigidity_report runs the whole battery of analyses on one map and reduces
them to six numerical predicates:

  P1  a.e. Lyapunov exponents match those of the linear part per bundle;
  P2  periodic data is constant over continued orbits and equals the
      linear data;
  P3  the strong-unstable periodic exponent is constant (the absolute
      continuity proxy for the center foliation);
  P4  UBD density bounds are stable across box scales;
  P5  finite-time center growth stays above half the linear center rate;
  P6  the center derivative of the conjugacy agrees with the leaf density
      (gated on P1, since the identity is derived under those hypotheses).

Verdict names say "evidence": finite sampling cannot certify statements
about all periodic points or almost every point.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import conjugacy as conj_mod
from . import foliation, lyapunov, splitting
from .errors import NoPositiveExponents
from .torus_core import DAMap, ToralAutomorphism, da_map_to_json

SCHEMA_VERSION = 1

PREDICATE_NAMES = {
    "P1": "exponent_match",
    "P2": "periodic_data",
    "P3": "su_constancy",
    "P4": "ubd_stability",
    "P5": "center_expansion",
    "P6": "density_derivative_match",
}


def pesin_entropy(exponents) -> float:
    """Sum of the positive Lyapunov exponents (metric entropy of volume)."""
    values = np.asarray(getattr(exponents, "values", exponents), dtype=float)
    positive = values[values > 0.0]
    if positive.size == 0:
        raise NoPositiveExponents("no positive exponents in the estimate")
    return float(positive.sum())


@dataclass(frozen=True)
class BalanceCheck:
    """Comparison of summed periodic expansion rates with the linear ones."""

    residual: float
    status: str                 # pass | fail | not_applicable
    periodic_sum: float
    linear_sum: float


def entropy_balance_check(
    periodic: lyapunov.PeriodicDataSummary,
    A: ToralAutomorphism,
    tol: float,
    spread_threshold: float = 1e-3,
) -> BalanceCheck:
    """Check that the periodic expansion rates sum to the linear entropy.

    Inapplicable (status not_applicable) when the periodic spreads exceed
    the constancy threshold, since a common periodic exponent is then
    undefined.
    """
    linear_sum = float(A.log_moduli[1] + A.log_moduli[2])
    if float(periodic.spread.max()) > spread_threshold:
        return BalanceCheck(
            residual=float("nan"),
            status="not_applicable",
            periodic_sum=float(periodic.mean[1] + periodic.mean[2]),
            linear_sum=linear_sum,
        )
    periodic_sum = float(periodic.mean[1] + periodic.mean[2])
    residual = abs(periodic_sum - linear_sum)
    return BalanceCheck(
        residual=residual,
        status="pass" if residual < tol else "fail",
        periodic_sum=periodic_sum,
        linear_sum=linear_sum,
    )


@dataclass(frozen=True)
class ReportConfig:
    """Budgets, tolerances and the seed for one rigidity report.

    Sub-analysis seeds are derived from ``seed`` by fixed offsets, so a
    report is a pure function of (map, config).
    """

    seed: int = 0
    exponent_samples: int = 16
    exponent_steps: int = 30000
    burn_in: int = 1000
    max_period: int = 3
    frame_depth: int = 40
    cone_resolution: int = 16
    cone_aperture: float = 0.5
    conjugacy_tolerance: float = 1e-12
    residual_grid: int = 16
    leaf_step: float = 1e-3
    claim_halflength: float = 0.25
    delta_tolerance: float = 1e-8
    ubd_scales: tuple = (0.4, 0.2, 0.1)
    ubd_samples_per_scale: int = 6
    ubd_tolerance: float = 1e-6
    cocycle_pairs: int = 8
    cocycle_n_max: int = 200
    expansion_samples: int = 100
    expansion_steps: int = 200
    tol_exponent: float = 5e-3
    spread_threshold: float = 1e-3
    ubd_stability_ratio: float = 1.5
    tol_balance: float = 1e-6
    tol_center_derivative: float = 1e-2
    pesin_slack: float = 5e-3
    threads: int = 0            # 0 means use all available cores

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class RigidityReport:
    """Machine-readable outcome of every criterion on one map.

    ``sections`` holds raw sub-analysis outputs (a section that raised is
    replaced by {'status': 'failed', 'error': ...}); ``predicates`` the
    P1-P6 verdicts; ``overall`` one of rigid_evidence, non_rigid_evidence,
    inconclusive.  ``tables`` carries numpy appendices (per-sample rows)
    that are exported as CSV, not JSON.
    """

    map_description: dict
    config: dict
    sections: dict
    predicates: dict
    notes: list
    overall: str
    schema_version: int = SCHEMA_VERSION
    tables: dict = field(default_factory=dict, repr=False)

    def to_json_dict(self):
        return {
            "schema_version": self.schema_version,
            "map": self.map_description,
            "config": self.config,
            "sections": self.sections,
            "predicates": self.predicates,
            "notes": self.notes,
            "overall": self.overall,
        }


def report_from_json_dict(d: dict) -> RigidityReport:
    return RigidityReport(
        map_description=d["map"],
        config=d["config"],
        sections=d["sections"],
        predicates=d["predicates"],
        notes=d["notes"],
        overall=d["overall"],
        schema_version=d["schema_version"],
    )


def _center_growth(map, samples, steps, seed, depth):
    """Min over samples of (1/n) log prod of center leaf Jacobians."""
    rng = np.random.default_rng(seed)
    x = rng.random((samples, 3))
    acc = np.zeros(samples)
    for _ in range(steps):
        acc += foliation._log_leaf_jacobian(map, x, "wu", depth)
        x = map.apply(x)
    return acc / steps


def _predicate(value, tolerance, passed, detail=None):
    out = {
        "value": value,
        "tolerance": tolerance,
        "status": "pass" if passed else "fail",
    }
    if detail:
        out["detail"] = detail
    return out


def rigidity_report(map: DAMap, config: ReportConfig = None) -> RigidityReport:
    """Run every analysis on the map and aggregate the rigidity verdict.

    Sub-analysis failures are caught per section; the report is still
    emitted with the failed sections marked and the touched predicates
    reported as failed_section.
    """
    if config is None:
        config = ReportConfig()
    A = map.linear_part
    log_m = A.log_moduli
    sections = {}
    tables = {}
    notes = [
        "Verdicts are numerical evidence from finite sampling, never proofs.",
        "UBD statistics are reported for both strong foliations (s, su) and "
        "the center foliation (wu); hypotheses in the literature vary "
        "between the strong-unstable line and the full unstable plane.",
        "P3 tests constancy of the strong-unstable periodic exponent only; "
        "constancy alone does not identify the constant with the linear "
        "value, which is why P2 keeps the equality check separate.",
    ]

    def run_section(name, fn):
        try:
            sections[name] = fn()
        except Exception as exc:  # noqa: BLE001 - report must survive failures
            sections[name] = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}

    def ok(name):
        return "status" not in sections.get(name, {"status": "failed"})

    def cone_section():
        cert = splitting.cone_certificate(
            map, config.cone_resolution, config.cone_aperture
        )
        return cert.to_dict()

    def exponent_section():
        stats = lyapunov.exponent_field(
            map, config.exponent_samples, config.exponent_steps,
            seed=config.seed, burn_in=config.burn_in,
        )
        tables["exponent_samples"] = stats.values
        out = stats.to_dict()
        out["sum_abs"] = float(np.abs(stats.values.sum(axis=1)).max())
        return out

    def periodic_section():
        summary = lyapunov.periodic_data_spread(map, config.max_period)
        tables["periodic_orbits"] = np.array(
            [
                [o.period, *o.points[0], *o.exponents, o.newton_residual]
                for o in summary.orbits
            ]
        )
        return summary.to_dict()

    def conjugacy_section():
        approx = conj_mod.solve_conjugacy(map, config.conjugacy_tolerance)
        residual = conj_mod.conjugacy_residual(approx, config.residual_grid)
        out = {
            "truncation": list(approx.truncation),
            "tail_bound": approx.tail_bound,
            "residual": residual,
            "grid_resolution": config.residual_grid,
        }
        if map.construction_tag == "smooth_conjugate":
            # the construction exposes the exact conjugacy; record recovery
            from .torus_core import _shear_apply

            res = config.residual_grid
            axes = np.arange(res) / res
            grid = np.stack(
                np.meshgrid(axes, axes, axes, indexing="ij"), -1
            ).reshape(-1, 3)
            phi = grid.copy()
            for s in map.pre_shears:
                phi = _shear_apply(phi, s)
            dev = np.abs(approx.displacement_field(grid) - (phi - grid)).max()
            out["ground_truth_deviation"] = float(dev)
        return out

    def ubd_section(bundle, seed):
        def run():
            return foliation.ubd_statistic(
                map, bundle, config.ubd_scales, config.ubd_samples_per_scale,
                seed=seed, step=config.leaf_step, depth=config.frame_depth,
                tolerance=config.ubd_tolerance,
            ).to_dict()
        return run

    def cocycle_section(bundle, seed):
        def run():
            return foliation.cocycle_ratio_statistic(
                map, bundle, config.cocycle_pairs, config.cocycle_n_max,
                seed=seed, step=config.leaf_step, depth=config.frame_depth,
            ).to_dict()
        return run

    def expansion_section():
        growth = _center_growth(
            map, config.expansion_samples, config.expansion_steps,
            seed=config.seed + 31, depth=config.frame_depth,
        )
        return {
            "min_growth": float(growth.min()),
            "mean_growth": float(growth.mean()),
            "threshold": float(log_m[1] / 2.0),
            "samples": config.expansion_samples,
            "steps": config.expansion_steps,
        }

    def center_derivative_section():
        rng = np.random.default_rng(config.seed + 41)
        start = rng.random(3)
        segment = foliation.integrate_leaf(
            map, start, "wu", config.claim_halflength,
            step=config.leaf_step, depth=config.frame_depth,
        )
        profile = foliation.leaf_density_profile(
            map, segment, config.delta_tolerance, depth=config.frame_depth
        )
        approx = conj_mod.solve_conjugacy(map, config.conjugacy_tolerance)
        stats = conj_mod.center_derivative_check(approx, segment, profile)
        tables["leaf_profile"] = np.column_stack(
            [segment.arclength, segment.points, profile.rho]
        )
        return asdict(stats)

    run_section("cone", cone_section)
    run_section("exponents", exponent_section)
    run_section("periodic", periodic_section)
    run_section("conjugacy", conjugacy_section)
    run_section("expansion", expansion_section)
    run_section("center_derivative", center_derivative_section)

    workers = config.threads if config.threads > 0 else (os.cpu_count() or 1)
    bundle_jobs = {}
    for i, bundle in enumerate(("s", "wu", "su")):
        bundle_jobs[("ubd", bundle)] = ubd_section(bundle, config.seed + 11 + i)
        bundle_jobs[("cocycle", bundle)] = cocycle_section(bundle, config.seed + 21 + i)
    results = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(_safe, fn) for key, fn in bundle_jobs.items()}
        for key in sorted(futures):
            results[key] = futures[key].result()
    sections["ubd"] = {b: results[("ubd", b)] for b in ("s", "wu", "su")}
    sections["cocycle"] = {b: results[("cocycle", b)] for b in ("s", "wu", "su")}

    # entropy section from the exponent and periodic sections
    def entropy_section():
        est = np.asarray(sections["exponents"]["mean"])
        pesin = pesin_entropy(est)
        linear_sum = float(log_m[1] + log_m[2])
        out = {
            "pesin_sum": pesin,
            "linear_sum": linear_sum,
            "pesin_within_slack": bool(pesin <= linear_sum + config.pesin_slack),
        }
        if ok("periodic"):
            summary_spread = np.asarray(sections["periodic"]["spread"])
            mean = np.asarray(sections["periodic"]["mean"])
            if float(summary_spread.max()) > config.spread_threshold:
                out.update(balance_residual=None, balance_status="not_applicable")
            else:
                residual = abs(float(mean[1] + mean[2]) - linear_sum)
                out.update(
                    balance_residual=residual,
                    balance_status="pass" if residual < config.tol_balance else "fail",
                )
        else:
            out.update(balance_residual=None, balance_status="failed_section")
        return out

    if ok("exponents"):
        run_section("entropy", entropy_section)
    else:
        sections["entropy"] = {"status": "failed", "error": "exponents section failed"}

    # ---- predicates -----------------------------------------------------
    predicates = {}

    if ok("exponents"):
        dev = np.abs(np.asarray(sections["exponents"]["mean"]) - log_m)
        predicates["P1"] = _predicate(
            float(dev.max()), config.tol_exponent, bool(dev.max() < config.tol_exponent),
            detail={"per_bundle": dev.tolist()},
        )
    else:
        predicates["P1"] = {"status": "failed_section"}

    if ok("periodic"):
        spread = np.asarray(sections["periodic"]["spread"])
        lo = np.abs(np.asarray(sections["periodic"]["min"]) - log_m)
        hi = np.abs(np.asarray(sections["periodic"]["max"]) - log_m)
        dev = float(np.maximum(lo, hi).max())
        constant = bool(spread.max() < config.spread_threshold)
        matches = bool(dev < config.tol_exponent)
        predicates["P2"] = _predicate(
            dev, config.tol_exponent, constant and matches,
            detail={
                "constant": constant,
                "matches_linear": matches,
                "max_spread": float(spread.max()),
                "spread_threshold": config.spread_threshold,
            },
        )
        predicates["P3"] = _predicate(
            float(spread[2]), config.spread_threshold,
            bool(spread[2] < config.spread_threshold),
            detail={"su_mean_deviation": float(abs(
                np.asarray(sections["periodic"]["mean"])[2] - log_m[2]))},
        )
    else:
        predicates["P2"] = {"status": "failed_section"}
        predicates["P3"] = {"status": "failed_section"}

    ubd_ok = all("status" not in sections["ubd"][b] for b in ("s", "wu", "su"))
    if ubd_ok:
        ratios = []
        for b in ("s", "wu", "su"):
            ks = np.asarray(sections["ubd"][b]["K_estimates"])
            ratios.append(float(ks.max() / ks.min()))
        predicates["P4"] = _predicate(
            float(max(ratios)), config.ubd_stability_ratio,
            bool(max(ratios) < config.ubd_stability_ratio),
            detail={"per_bundle_ratio": ratios},
        )
    else:
        predicates["P4"] = {"status": "failed_section"}

    if ok("expansion"):
        val = sections["expansion"]["min_growth"]
        thr = sections["expansion"]["threshold"]
        predicates["P5"] = _predicate(val, thr, bool(val > thr))
    else:
        predicates["P5"] = {"status": "failed_section"}

    if ok("center_derivative"):
        if predicates["P1"].get("status") == "pass":
            val = sections["center_derivative"]["max_deviation"]
            predicates["P6"] = _predicate(
                val, config.tol_center_derivative,
                bool(val < config.tol_center_derivative),
            )
        else:
            predicates["P6"] = {
                "status": "not_applicable",
                "value": sections["center_derivative"]["max_deviation"],
                "tolerance": config.tol_center_derivative,
                "detail": {"reason": "gated on P1"},
            }
    else:
        predicates["P6"] = {"status": "failed_section"}

    # cocycle versus UBD bound, informational
    if ubd_ok and all("status" not in sections["cocycle"][b] for b in ("s", "wu", "su")):
        for b in ("s", "wu", "su"):
            k4 = sections["ubd"][b]["K_global"] ** 4
            sup = sections["cocycle"][b]["sup_ratio"]
            inf = sections["cocycle"][b]["inf_ratio"]
            if max(sup, 1.0 / inf) > 2.0 * k4:
                notes.append(
                    f"cocycle ratio bound violated on {b}: sup {sup:.3g} vs "
                    f"2*K^4 = {2 * k4:.3g}"
                )

    if ok("entropy") and not sections["entropy"]["pesin_within_slack"]:
        notes.append("entropy sum exceeds the linear entropy beyond slack")

    # ---- overall --------------------------------------------------------
    p1 = predicates["P1"].get("status") == "pass"
    p2 = predicates["P2"].get("status") == "pass"
    balance_status = sections.get("entropy", {}).get("balance_status")
    balance = balance_status == "pass"
    if p1 and p2 and balance:
        overall = "rigid_evidence"
    else:
        decisive = False
        if predicates["P1"].get("status") == "fail":
            decisive |= predicates["P1"]["value"] > 3.0 * config.tol_exponent
        if predicates["P2"].get("status") == "fail":
            decisive |= (
                predicates["P2"]["value"] > 3.0 * config.tol_exponent
                or predicates["P2"]["detail"]["max_spread"]
                > 3.0 * config.spread_threshold
            )
        if balance_status == "fail":
            decisive |= sections["entropy"]["balance_residual"] > 3.0 * config.tol_balance
        overall = "non_rigid_evidence" if decisive else "inconclusive"

    return RigidityReport(
        map_description=da_map_to_json(map),
        config=config.to_dict(),
        sections=sections,
        predicates=predicates,
        notes=notes,
        overall=overall,
        tables=tables,
    )


def _safe(fn):
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - sections degrade, never crash
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
