"""Command-line front end: ``spm run CONFIG`` plus per-experiment aliases.

Every run writes a JSON summary (and experiment-specific CSV curves /
certificate reports / binary field snapshots) into the output directory.
Artifacts embed the config hash and the tool version and contain no
timestamps, so reruns with an identical config are byte-identical.

Exit codes: 0 all checks passed, 1 check violations (report written),
2 configuration or certification error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import struct
import sys

import numpy as np

from . import __version__
from .attractor import (
    absorption_radius,
    contraction_check,
    estimate_eta0,
    pullback_ensemble,
    random_low_mode_field,
    sample_invariant_measure,
)
from .config import ConfigError, EXPERIMENT_KINDS, apply_overrides, load_config
from .estimates import (
    check_decay_bound,
    check_gradient_energy,
    check_h_energy,
    check_l2_energy,
    derive_constants,
)
from .integrator import SolverError, solve
from .nonlinearity import CertificationError, Hypothesis, certify
from .noise import WienerPath

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_field_snapshot(path: str, coeffs: np.ndarray, length: float):
    """Binary snapshot: magic, version, n_modes, interval length, coeffs."""
    with open(path, "wb") as fh:
        fh.write(b"SPMF")
        fh.write(struct.pack("<II", 1, len(coeffs)))
        fh.write(struct.pack("<d", float(length)))
        fh.write(np.asarray(coeffs, dtype="<f8").tobytes())


def _base_payload(loaded) -> dict:
    return {
        "tool_version": __version__,
        "config_hash": loaded.hash,
        "experiment": loaded.kind,
        "config": loaded.doc,
    }


def _make_path(loaded, seed: int, t_min: float, t_max: float):
    if loaded.Q is None:
        return None
    return WienerPath(
        seed=seed,
        m=loaded.Q.m,
        dt_grid=loaded.noise_dt,
        t_min=min(t_min, 0.0),
        t_max=max(t_max, 0.0),
    )


def _map_seeds(fn, seeds, jobs: int):
    """Ordered map over seeds, optionally across processes."""
    if jobs <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, seeds))


# ---------------------------------------------------------------------------
# experiment runners (each returns an exit code and fills the summary)


def _run_simulate(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    t0, t1 = exp["t_start"], exp["t_end"]

    def one(seed):
        path = _make_path(loaded, seed, t0, t1)
        x = loaded.initial_condition(exp["initial_condition"], seed)
        store = loaded.snapshot_stride > 0
        traj = solve(x, t0, t1, loaded.solver, loaded.nl, path, loaded.Q,
                     domain=loaded.domain, store_fields=store)
        csv_path = os.path.join(out_dir, f"trajectory_seed{seed}.csv")
        with open(csv_path, "w") as fh:
            traj.write_csv(fh)
        if store:
            for i in range(0, len(traj.times), loaded.snapshot_stride):
                _write_field_snapshot(
                    os.path.join(out_dir, f"field_seed{seed}_{i:06d}.bin"),
                    traj.fields[i], loaded.domain.length)
        return {
            "seed": seed,
            "final_h_norm": float(traj.diagnostics["h_norm"][-1]),
            "final_l2_norm": float(traj.diagnostics["l2_norm"][-1]),
            "defect_rate": traj.residual_rate(),
            "trajectory_csv": os.path.basename(csv_path),
        }

    summary["runs"] = _map_seeds(one, loaded.seeds, jobs)
    return EXIT_OK


def _run_verify_hypotheses(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    box = exp.get("search_box", 10.0)
    step = exp.get("grid_step", 1e-3)
    results = []
    mismatches = 0
    for item in exp["hypotheses"]:
        cert = certify(loaded.nl, Hypothesis(item["name"]), box, step)
        expected = item.get("expect", "pass")
        outcome = "pass" if cert.passed else "fail"
        results.append({"certificate": cert.to_dict(), "expect": expected,
                        "outcome": outcome, "matches": outcome == expected})
        mismatches += outcome != expected
    _write_json(os.path.join(out_dir, "certificates.json"), {"results": results})
    summary["certificates"] = results
    summary["mismatches"] = mismatches
    return EXIT_OK if mismatches == 0 else EXIT_VIOLATION


_CHECKS = {
    "h_energy": check_h_energy,
    "l2_energy": check_l2_energy,
    "gradient_energy": check_gradient_energy,
    "decay_bound": check_decay_bound,
}


def _run_verify_estimates(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    t0, t1 = exp["t_start"], exp["t_end"]
    cfg = derive_constants(
        loaded.nl, loaded.domain,
        beta=exp.get("beta", 0.25), alpha=exp.get("alpha", 0.25),
        slack=exp.get("slack", 0.05),
    )
    route = exp.get("l2_route", "auto")

    def one(seed):
        path = _make_path(loaded, seed, t0, t1)
        x = loaded.initial_condition(exp["initial_condition"], seed)
        need_fields = "gradient_energy" in exp["checks"]
        traj = solve(x, t0, t1, loaded.solver, loaded.nl, path, loaded.Q,
                     domain=loaded.domain, store_fields=need_fields)
        reports = []
        for name in exp["checks"]:
            if name == "l2_energy" and route != "auto":
                rep = check_l2_energy(traj, cfg, route=route)
            else:
                rep = _CHECKS[name](traj, cfg)
            reports.append({"seed": seed, **rep.to_dict()})
        return reports

    all_reports = [r for chunk in _map_seeds(one, loaded.seeds, jobs) for r in chunk]
    _write_json(os.path.join(out_dir, "estimate_reports.json"), {"reports": all_reports})
    summary["reports"] = all_reports
    violations = sum(r["violation_count"] for r in all_reports)
    summary["total_violations"] = violations
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


def _run_pullback(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    horizons = exp["horizons"]
    n_ics = exp.get("n_ics", 3)
    radius = exp.get("ic_radius", 1.0)

    def one(seed):
        rng = np.random.default_rng((seed, 0x1C))
        x_list = [random_low_mode_field(loaded.domain, rng, 4, radius)
                  for _ in range(n_ics)]
        report = pullback_ensemble(x_list, horizons, seed, loaded.solver,
                                   loaded.nl, loaded.Q, loaded.domain,
                                   noise_dt=loaded.noise_dt)
        rows = zip(report.horizons, report.radii, report.diameters,
                   report.bound_curve if report.bound_curve is not None
                   else [float("nan")] * len(report.horizons))
        _write_csv(os.path.join(out_dir, f"pullback_seed{seed}.csv"),
                   ["T", "radius_l2", "diameter_h", "bound"],
                   [(float(a), float(b), float(c), float(d)) for a, b, c, d in rows])
        return report.to_dict()

    summary["pullback"] = _map_seeds(one, loaded.seeds, jobs)
    if exp.get("rho_list"):
        table = absorption_radius(
            exp["rho_list"], horizons, loaded.seeds, loaded.solver,
            loaded.nl, loaded.Q, loaded.domain,
            band=exp.get("band", 0.1), noise_dt=loaded.noise_dt)
        _write_csv(os.path.join(out_dir, "absorption.csv"),
                   ["rho", "seed", "entry_horizon", "kappa"],
                   [(r["rho"], r["seed"], r["entry_horizon"], r["kappa"])
                    for r in table["rows"]])
        summary["absorption"] = table
    return EXIT_OK


def _run_attractor(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    tol = exp.get("tol", 1e-3)
    fwd = exp.get("forward_time", 1.0)

    def one(seed):
        est = estimate_eta0(
            seed, loaded.solver, loaded.nl, loaded.Q, loaded.domain, tol=tol,
            initial_horizon=exp.get("initial_horizon", 1.0),
            max_horizon=exp.get("max_horizon", 4096.0),
            noise_dt=loaded.noise_dt)
        T_final = est.table[-1]["T"]
        # forward invariance: evolve the estimate and compare with the
        # pullback estimate at the later time under the same realization
        path = _make_path(loaded, seed, -T_final, fwd)
        fwd_traj = solve(est.field(loaded.domain), 0.0, fwd, loaded.solver,
                         loaded.nl, path, loaded.Q, domain=loaded.domain)
        later = solve(loaded.domain.zero_field(), -T_final, fwd, loaded.solver,
                      loaded.nl, path, loaded.Q, domain=loaded.domain)
        gap = (fwd_traj.s_field(-1) - later.s_field(-1)).h_norm()
        _write_field_snapshot(os.path.join(out_dir, f"eta0_seed{seed}.bin"),
                              est.coeffs, loaded.domain.length)
        _write_csv(os.path.join(out_dir, f"doubling_seed{seed}.csv"),
                   ["T", "max_delta", "diameter"],
                   [(row["T"], row["max_delta"], row["diameter"])
                    for row in est.table])
        out = est.to_dict()
        out["forward_invariance_gap"] = float(gap)
        out["forward_time"] = fwd
        return out

    summary["attractor"] = _map_seeds(one, loaded.seeds, jobs)
    return EXIT_OK


def _run_invariant_measure(loaded, out_dir: str, jobs: int, summary: dict) -> int:
    exp = loaded.experiment
    stats = sample_invariant_measure(
        loaded.seeds, loaded.solver, loaded.nl, loaded.Q, loaded.domain,
        tol=exp.get("tol", 1e-3),
        functionals=tuple(exp.get("functionals", ["l2_norm", "h_norm", "coeff_1"])),
        initial_horizon=exp.get("initial_horizon", 1.0),
        max_horizon=exp.get("max_horizon", 4096.0),
        noise_dt=loaded.noise_dt)
    _write_csv(os.path.join(out_dir, "invariant_measure.csv"),
               ["seed"] + stats["functionals"],
               [tuple([r["seed"]] + [r[f] for f in stats["functionals"]])
                for r in stats["samples"]])
    summary["invariant_measure"] = stats
    return EXIT_OK


_RUNNERS = {
    "simulate": _run_simulate,
    "verify-hypotheses": _run_verify_hypotheses,
    "verify-estimates": _run_verify_estimates,
    "pullback": _run_pullback,
    "attractor": _run_attractor,
    "invariant-measure": _run_invariant_measure,
}


def run(config_path: str, overrides=(), jobs: int = 0, out_dir: str = None,
        force_kind: str = None) -> int:
    """Execute one experiment config; returns the process exit code."""
    try:
        with open(config_path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = apply_overrides(doc, overrides)
        if force_kind is not None:
            doc.setdefault("experiment", {})["kind"] = force_kind
        loaded = load_config(doc)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = out_dir or loaded.out_dir
    os.makedirs(out, exist_ok=True)
    if jobs <= 0:
        jobs = os.cpu_count() or 1
    summary = _base_payload(loaded)
    try:
        code = _RUNNERS[loaded.kind](loaded, out, jobs, summary)
    except (CertificationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary["exit_code"] = code
    _write_json(os.path.join(out, "summary.json"), summary)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spm",
        description="spectral simulator and verification harness for "
                    "stochastic porous medium dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="path to a JSON experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")
        p.add_argument("--jobs", type=int, default=0,
                       help="parallel workers over seeds (default: all cores)")
        p.add_argument("--out", default=None, help="output directory override")

    add_common(sub.add_parser("run", help="run the experiment named in the config"))
    for kind in EXPERIMENT_KINDS:
        add_common(sub.add_parser(kind, help=f"run a {kind} experiment"))

    args = parser.parse_args(argv)
    force = None if args.command == "run" else args.command
    return run(args.config, overrides=args.set, jobs=args.jobs,
               out_dir=args.out, force_kind=force)


if __name__ == "__main__":
    sys.exit(main())
