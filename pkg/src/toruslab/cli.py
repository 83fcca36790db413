"""Experiment runner: declarative JSON configs in, reports and CSVs out.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (partial
outputs are still written).  Identical configs produce byte-identical
output files: no timestamps, floats rendered with repr, JSON keys sorted.

Subcommands: analyze (full rigidity report), exponents, periodic,
conjugacy, foliation, ubd (each writes the corresponding data files), and
validate (config check only).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import conjugacy as conj_mod
from . import foliation, lyapunov
from .errors import ConfigError, IOFailure, ToruslabError
from .rigidity import PREDICATE_NAMES, ReportConfig, RigidityReport, rigidity_report
from .torus_core import da_map_from_json, nearest_delta

SCHEMA_VERSION = 1
THREADS_ENV_VAR = "TORUSLAB_THREADS"

ANALYSES = ("exponents", "periodic", "conjugacy", "foliation", "ubd", "report")
STOCHASTIC_ANALYSES = {"exponents", "foliation", "ubd", "report"}

_MAP_KEYS = {"matrix", "shears", "eps_scale", "mode"}
_SHEAR_KEYS = {"axis", "wave_vector", "amplitude", "phase"}
_TOP_KEYS = {
    "schema_version", "map", "analyses", "budgets", "tolerances",
    "seed", "out_dir", "threads",
}
_BUDGET_KEYS = {
    "exponent_samples", "exponent_steps", "burn_in", "max_period",
    "frame_depth", "cone_resolution", "cone_aperture", "residual_grid",
    "leaf_step", "claim_halflength", "ubd_scales", "ubd_samples_per_scale",
    "cocycle_pairs", "cocycle_n_max", "expansion_samples", "expansion_steps",
}
_TOLERANCE_KEYS = {
    "conjugacy_tolerance", "delta_tolerance", "ubd_tolerance",
    "tol_exponent", "spread_threshold", "ubd_stability_ratio",
    "tol_balance", "tol_center_derivative", "pesin_slack",
}


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    map_spec: dict
    analyses: list
    report_config: ReportConfig
    seed: int
    out_dir: str
    threads: int = 0
    raw: dict = field(default_factory=dict, repr=False)


def _reject_unknown(d, allowed, where):
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def validate_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config dict; raises ConfigError naming the offender."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}"
        )
    if "map" not in raw:
        raise ConfigError("missing required field: map")
    map_spec = raw["map"]
    _reject_unknown(map_spec, _MAP_KEYS, "map")
    if "matrix" not in map_spec:
        raise ConfigError("missing required field: map.matrix")
    for i, sh in enumerate(map_spec.get("shears", [])):
        _reject_unknown(sh, _SHEAR_KEYS, f"map.shears[{i}]")

    analyses = raw.get("analyses", ["report"])
    bad = sorted(set(analyses) - set(ANALYSES))
    if bad:
        raise ConfigError(f"unknown analyses {bad}; valid: {list(ANALYSES)}")
    if not analyses:
        raise ConfigError("analyses must not be empty")

    budgets = raw.get("budgets", {})
    _reject_unknown(budgets, _BUDGET_KEYS, "budgets")
    tolerances = raw.get("tolerances", {})
    _reject_unknown(tolerances, _TOLERANCE_KEYS, "tolerances")
    for key, value in {**budgets, **tolerances}.items():
        if key == "ubd_scales":
            if not value or any(s <= 0 for s in value):
                raise ConfigError("budgets.ubd_scales must be positive")
            continue
        if not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"{key} must be a positive number, got {value!r}")

    seed = raw.get("seed")
    if seed is None and STOCHASTIC_ANALYSES & set(analyses):
        missing = sorted(STOCHASTIC_ANALYSES & set(analyses))
        raise ConfigError(
            f"missing required field: seed (stochastic analyses {missing} selected)"
        )
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    threads = raw.get("threads", 0)
    if not isinstance(threads, int) or threads < 0:
        raise ConfigError(f"threads must be a nonnegative integer, got {threads!r}")

    kwargs = dict(budgets)
    if "ubd_scales" in kwargs:
        kwargs["ubd_scales"] = tuple(float(s) for s in kwargs["ubd_scales"])
    kwargs.update(tolerances)
    int_fields = {
        "exponent_samples", "exponent_steps", "burn_in", "max_period",
        "frame_depth", "cone_resolution", "residual_grid",
        "ubd_samples_per_scale", "cocycle_pairs", "cocycle_n_max",
        "expansion_samples", "expansion_steps",
    }
    for key in int_fields & set(kwargs):
        kwargs[key] = int(kwargs[key])
    report_config = ReportConfig(
        seed=seed if seed is not None else 0, threads=threads, **kwargs
    )
    return ExperimentConfig(
        map_spec=map_spec,
        analyses=list(analyses),
        report_config=report_config,
        seed=seed if seed is not None else 0,
        out_dir=raw.get("out_dir", "toruslab_out"),
        threads=threads,
        raw=raw,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


# -- output writers --------------------------------------------------------

def _dump_json(obj, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _dump_csv(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def render_text_report(report: RigidityReport) -> str:
    """Fixed-layout human-readable rendering, one line per predicate."""
    lines = []
    lines.append(f"rigidity report (schema {report.schema_version})")
    lines.append(f"map: {json.dumps(report.map_description, sort_keys=True)}")
    lines.append("")
    for key in sorted(report.predicates):
        pred = report.predicates[key]
        name = PREDICATE_NAMES[key]
        status = pred.get("status", "failed_section")
        if status in ("pass", "fail", "not_applicable"):
            value = pred.get("value")
            tol = pred.get("tolerance")
            lines.append(
                f"{key} {name:<26} value={value:.6e} tol={tol:.3e} {status.upper()}"
            )
        else:
            lines.append(f"{key} {name:<26} FAILED")
    lines.append("")
    failed = [k for k, v in report.sections.items()
              if isinstance(v, dict) and v.get("status") == "failed"]
    for k in failed:
        lines.append(f"section {k} FAILED: {report.sections[k]['error']}")
    if failed:
        lines.append("")
    for note in report.notes:
        lines.append(f"note: {note}")
    lines.append("")
    lines.append(f"overall: {report.overall}")
    return "\n".join(lines) + "\n"


def emit_report(report: RigidityReport, format: str, path: str):
    """Write the report as canonical JSON or as a text table."""
    if format == "json":
        _dump_json(report.to_json_dict(), path)
    elif format == "text":
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(render_text_report(report))
        except OSError as exc:
            raise IOFailure(f"cannot write {path}: {exc}") from exc
    else:
        raise ValueError(f"format must be 'json' or 'text', got {format!r}")


# -- analyses ---------------------------------------------------------------

def _run_exponents(map, rc, out):
    stats = lyapunov.exponent_field(
        map, rc.exponent_samples, rc.exponent_steps, seed=rc.seed,
        burn_in=rc.burn_in,
    )
    _dump_csv(
        os.path.join(out, "exponents.csv"),
        ["sample", "lambda_s", "lambda_wu", "lambda_su"],
        [[i, *row] for i, row in enumerate(stats.values)],
    )
    _dump_json(stats.to_dict(), os.path.join(out, "exponents.json"))


def _run_periodic(map, rc, out):
    summary = lyapunov.periodic_data_spread(map, rc.max_period)
    _dump_csv(
        os.path.join(out, "periodic_orbits.csv"),
        ["period", "x", "y", "z", "lambda_s", "lambda_wu", "lambda_su",
         "newton_residual"],
        [[o.period, *o.points[0], *o.exponents, o.newton_residual]
         for o in summary.orbits],
    )
    _dump_json(summary.to_dict(), os.path.join(out, "periodic.json"))


def _run_conjugacy(map, rc, out):
    approx = conj_mod.solve_conjugacy(map, rc.conjugacy_tolerance)
    residual = conj_mod.conjugacy_residual(approx, rc.residual_grid)
    res = rc.residual_grid
    axes = np.arange(res) / res
    grid = np.stack(np.meshgrid(axes, axes, axes, indexing="ij"), -1).reshape(-1, 3)
    h = conj_mod.evaluate_h(approx, grid)
    amat = map.linear_part.matrix.astype(float)
    per_point = np.linalg.norm(
        nearest_delta(conj_mod.evaluate_h(approx, map.apply(grid)), h @ amat.T),
        axis=1,
    )
    _dump_csv(
        os.path.join(out, "conjugacy_grid.csv"),
        ["x", "y", "z", "hx", "hy", "hz", "residual"],
        np.column_stack([grid, h, per_point]),
    )
    _dump_json(
        {
            "truncation": list(approx.truncation),
            "tail_bound": approx.tail_bound,
            "residual": residual,
            "grid_resolution": rc.residual_grid,
        },
        os.path.join(out, "conjugacy.json"),
    )


def _run_foliation(map, rc, out):
    rng = np.random.default_rng(rc.seed + 41)
    start = rng.random(3)
    segment = foliation.integrate_leaf(
        map, start, "wu", rc.claim_halflength, step=rc.leaf_step,
        depth=rc.frame_depth,
    )
    profile = foliation.leaf_density_profile(
        map, segment, rc.delta_tolerance, depth=rc.frame_depth
    )
    _dump_csv(
        os.path.join(out, "leaf_profile.csv"),
        ["arclength", "x", "y", "z", "rho"],
        np.column_stack([segment.arclength, segment.points, profile.rho]),
    )
    su_segment = foliation.integrate_leaf(
        map, start, "su", min(0.1, rc.claim_halflength), step=rc.leaf_step,
        depth=rc.frame_depth,
    )
    residual = foliation.equivariance_check(
        map, su_segment, rc.ubd_tolerance, depth=rc.frame_depth
    )
    _dump_json(
        {
            "wu_segment_points": int(segment.points.shape[0]),
            "wu_segment_length": segment.length,
            "equivariance_bundle": "su",
            "equivariance_residual": residual,
        },
        os.path.join(out, "foliation.json"),
    )


def _run_ubd(map, rc, out):
    payload = {}
    for i, bundle in enumerate(("s", "wu", "su")):
        stat = foliation.ubd_statistic(
            map, bundle, rc.ubd_scales, rc.ubd_samples_per_scale,
            seed=rc.seed + 11 + i, step=rc.leaf_step, depth=rc.frame_depth,
            tolerance=rc.ubd_tolerance,
        )
        coc = foliation.cocycle_ratio_statistic(
            map, bundle, rc.cocycle_pairs, rc.cocycle_n_max,
            seed=rc.seed + 21 + i, step=rc.leaf_step, depth=rc.frame_depth,
        )
        payload[bundle] = {"ubd": stat.to_dict(), "cocycle": coc.to_dict()}
    _dump_json(payload, os.path.join(out, "ubd.json"))


def _run_report(map, rc, out):
    report = rigidity_report(map, rc)
    emit_report(report, "json", os.path.join(out, "report.json"))
    emit_report(report, "text", os.path.join(out, "report.txt"))
    if "exponent_samples" in report.tables:
        _dump_csv(
            os.path.join(out, "exponent_samples.csv"),
            ["lambda_s", "lambda_wu", "lambda_su"],
            report.tables["exponent_samples"],
        )
    if "periodic_orbits" in report.tables:
        _dump_csv(
            os.path.join(out, "periodic_orbits.csv"),
            ["period", "x", "y", "z", "lambda_s", "lambda_wu", "lambda_su",
             "newton_residual"],
            report.tables["periodic_orbits"],
        )
    if "leaf_profile" in report.tables:
        _dump_csv(
            os.path.join(out, "leaf_profile.csv"),
            ["arclength", "x", "y", "z", "rho"],
            report.tables["leaf_profile"],
        )
    failed = [k for k, v in report.sections.items()
              if isinstance(v, dict) and v.get("status") == "failed"]
    cone_false = (
        "status" not in report.sections.get("cone", {"status": "failed"})
        and not report.sections["cone"]["verdict"]
    )
    return bool(failed) or cone_false


_RUNNERS = {
    "exponents": _run_exponents,
    "periodic": _run_periodic,
    "conjugacy": _run_conjugacy,
    "foliation": _run_foliation,
    "ubd": _run_ubd,
}


def run_experiment(config: ExperimentConfig) -> int:
    """Execute the selected analyses; returns the process exit status."""
    try:
        map = da_map_from_json(dict(config.map_spec))
    except (ToruslabError, ValueError) as exc:
        print(f"error: invalid map: {exc}", file=sys.stderr)
        return 2
    os.makedirs(config.out_dir, exist_ok=True)
    rc = config.report_config
    degraded = False
    for analysis in config.analyses:
        try:
            if analysis == "report":
                degraded |= _run_report(map, rc, config.out_dir)
            else:
                _RUNNERS[analysis](map, rc, config.out_dir)
        except IOFailure:
            raise
        except (ToruslabError, FloatingPointError, np.linalg.LinAlgError) as exc:
            print(f"error: analysis {analysis} failed: {exc}", file=sys.stderr)
            degraded = True
    return 3 if degraded else 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="toruslab",
        description="Rigidity experiments for volume-preserving maps of the 3-torus",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("analyze", "run the full rigidity report"),
        ("exponents", "Lyapunov exponent field only"),
        ("periodic", "periodic data only"),
        ("conjugacy", "conjugacy series only"),
        ("foliation", "leaf densities only"),
        ("ubd", "UBD and cocycle statistics only"),
        ("validate", "validate the config and exit"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument(
            "--threads", type=int,
            help=f"worker threads (default: all cores; env {THREADS_ENV_VAR})",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = json.load(open(args.config, "r", encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        raw["out_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV_VAR):
        try:
            threads = int(os.environ[THREADS_ENV_VAR])
        except ValueError:
            print(f"error: {THREADS_ENV_VAR} must be an integer", file=sys.stderr)
            return 2
    if threads is not None:
        raw["threads"] = threads
    if args.command == "analyze":
        raw["analyses"] = ["report"]
    elif args.command != "validate":
        raw["analyses"] = [args.command]
    try:
        config = validate_config(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print("config ok")
        return 0
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
