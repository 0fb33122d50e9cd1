"""Command-line front end.

Exit codes: 0 success, 2 configuration or archive input error, 3 forward step
failure (partial archive kept), 4 solver failure (best iterate kept), 5 failed
verification.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import archive, config, export, runs, verify
from .integrator import StepFailure, Trajectory

EXIT_OK, EXIT_INPUT, EXIT_STEP, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5


def _config_path(value: str) -> Path:
    p = Path(value)
    if p.exists():
        return p
    bundled = config.bundled_configs()
    if value in bundled:
        return bundled[value]
    raise config.ConfigError(f"config {value!r} not found (bundled: {', '.join(sorted(bundled))})")


def _load(args):
    return config.load(_config_path(args.config))


def _energy_audit(system, traj) -> dict:
    E = verify.energy_series(system, traj)
    if not len(E):
        return {}
    return {"initial": float(E[0]), "final": float(E[-1]), "max_abs_drift": float(np.max(np.abs(E - E[0]))),
            "max_increase": float(np.max(np.diff(E), initial=0.0))}


def _partial(system, rows, dt) -> Trajectory:
    L = system.layout
    q = np.array(rows)
    N = len(q) - 1
    nan = np.nan
    return Trajectory(q, np.full((N + 1, L.n_ext), nan), np.full((N, L.n_contact), nan),
                      np.full((N, L.n_charge), nan), np.full((N + 1, L.n_q), nan), np.full(N, nan), dt,
                      np.full(N, -1))


def _passive_from(doc):
    """First interval after which the run has no electrical input and no friction."""
    if doc.get("friction_bodies"):
        return None
    sim = doc.get("simulate", {})
    phases = sim.get("phases") or [{"steps": doc["horizon"]["N"], "control": "zero-charge"}]
    start, n = 0, 0
    for ph in phases:
        if ph["control"] != "zero-charge":
            start = n + ph["steps"]
        n += ph["steps"]
    return start if start < n else None


def cmd_simulate(args) -> int:
    doc = _load(args)
    system = runs.system_from(doc)
    sim = doc.get("simulate", {})
    phases = sim.get("phases") or [{"steps": doc["horizon"]["N"], "control": "zero-charge"}]
    charges, potentials = runs._phase_schedule(system, doc, phases)
    q0 = runs.initial_state(system, doc, sim.get("initial_pattern"))
    rows = [q0]
    t0 = time.perf_counter()
    try:
        traj = runs._run_schedule(system, q0, None, doc["horizon"]["dt"], charges, potentials,
                                  progress=lambda n, q: rows.append(q.copy()))
    except StepFailure as exc:
        archive.write(args.out_dir, system.layout, _partial(system, rows, doc["horizon"]["dt"]),
                      {"mode": "simulate", "config": doc["name"], "status": "step-failure", "error": str(exc)})
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    summary = {"mode": "simulate", "config": doc["name"], "status": "ok", "passive_from": _passive_from(doc),
               "energy": _energy_audit(system, traj), "wall_time": time.perf_counter() - t0}
    archive.write(args.out_dir, system.layout, traj, summary)
    print(f"simulated {traj.N} steps; energy drift {summary['energy'].get('max_abs_drift', 0.0):.3e}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    doc = _load(args)
    warm = archive.read_snapshot(args.warm_start) if args.warm_start else None
    opts = runs.solver_options(doc, args.max_iter, args.tol, verbose=args.verbose)
    t0 = time.perf_counter()
    setup, x, report = runs.optimize(doc, warm, opts)
    traj = setup.problem.to_trajectory(x)
    summary = {"mode": "optimize", "config": doc["name"], "status": report.status, "objective": report.objective,
               "solver": report.to_dict(), "tol_eq": opts.tol_eq, "problem": setup.problem.census(),
               "energy": _energy_audit(setup.system, traj), "wall_time": time.perf_counter() - t0}
    out = archive.write(args.out_dir, setup.system.layout, traj, summary)
    archive.write_snapshot(out / archive.SNAPSHOT_FILE, x, {"config": doc["name"], "status": report.status})
    print(f"status {report.status}; objective {report.objective:.6e}; "
          f"max equality violation {report.max_eq_violation:.3e}; iterations {report.iterations}")
    return EXIT_OK if report.status == "optimal" else EXIT_SOLVER


def cmd_replay(args) -> int:
    doc = _load(args)
    if not args.source:
        raise config.ConfigError("replay needs --source <optimize archive directory>")
    source, _ = archive.read(args.source)
    t0 = time.perf_counter()
    rows = [source.q[0]]
    try:
        system, traj = runs.replay(doc, source, progress=lambda n, q: rows.append(q.copy()))
    except StepFailure as exc:
        system = runs.system_from(doc)
        archive.write(args.out_dir, system.layout, _partial(system, rows, source.dt),
                      {"mode": "replay", "config": doc["name"], "status": "step-failure", "error": str(exc)})
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    summary = {"mode": "replay", "config": doc["name"], "status": "ok", "passive_from": None,
               "source": str(args.source), "energy": _energy_audit(system, traj),
               "wall_time": time.perf_counter() - t0}
    archive.write(args.out_dir, system.layout, traj, summary)
    print(f"replayed {traj.N} steps")
    return EXIT_OK


def cmd_verify(args) -> int:
    doc = _load(args)
    system = runs.system_from(doc)
    traj, summary = archive.read(args.out_dir, system.layout)
    if summary.get("status") == "step-failure":
        print("FAIL archive: partial archive from a failed run")
        return EXIT_VERIFY
    checks = [verify.constraint_check(system, traj)]
    checks += verify.contact_check(system, traj)
    checks.append(verify.dynamics_check(system, traj))
    checks += verify.energy_check(system, traj, summary.get("passive_from"))
    prob = verify.dynamics_problem(system, traj)
    checks.append(verify.jacobian_check(prob, prob.from_trajectory(traj), seed=args.seed))
    if summary.get("mode") == "optimize":
        setup = runs.optimization_setup(doc)
        checks += verify.optimal_control_checks(setup.problem, traj, summary)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def cmd_export(args) -> int:
    doc = _load(args)
    system = runs.system_from(doc)
    traj, _ = archive.read(args.out_dir, system.layout)
    names = args.series or []
    paths = export.export(system, traj, names, args.export_dir or Path(args.out_dir) / "plotdata")
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deaoc", description="Electromechanical beam dynamics and optimal control")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario YAML file or bundled scenario name")
        p.add_argument("--out-dir", required=True, help="archive directory")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        p.add_argument("--verbose", action="store_true")
        return p

    common(sub.add_parser("simulate", help="forward dynamics")).set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("optimize", help="solve the optimal control problem"))
    p.add_argument("--warm-start", help="decision-vector snapshot to start from")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float, help="equality tolerance")
    p.set_defaults(func=cmd_optimize)
    p = common(sub.add_parser("replay", help="forward run driven by an optimized archive"))
    p.add_argument("--source", help="optimize archive directory")
    p.set_defaults(func=cmd_replay)
    common(sub.add_parser("verify", help="re-check invariants of an archive")).set_defaults(func=cmd_verify)
    p = common(sub.add_parser("export", help="write plot-ready CSV series"))
    p.add_argument("--series", action="append", help="series name, repeatable")
    p.add_argument("--export-dir", help="output directory (default <out-dir>/plotdata)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (config.ConfigError, archive.ArchiveError, export.SeriesError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
