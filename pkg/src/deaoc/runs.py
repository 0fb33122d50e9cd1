"""Run orchestration shared by the command line and the demo scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from . import integrator
from . import ocp
from .multibody import NODE_FIELDS, System, build_system

_AXES = {"x": 0, "y": 1, "z": 2}
_BODY_FIELDS = NODE_FIELDS[:12]
_ROWS = {"x": 0, "y": 1, "z": 2, "rx": 3, "ry": 4, "rz": 5}


def system_from(doc: dict) -> System:
    return build_system(cfgmod.scenario(doc))


def pattern_vector(system: System, pattern: dict) -> np.ndarray:
    """Alternating nodal potentials on every electrode node (node 1 of each beam is odd)."""
    L = system.layout
    scale = pattern.get("scale", 1.0)
    odd = scale * np.asarray(pattern["odd"], float)
    even = scale * np.asarray(pattern["even"], float)
    out = np.zeros(L.n_q)
    electrodes = set(L.electrode_nodes)
    for start, count in zip(L.beam_node_start, L.beam_node_count):
        k = 0
        for i in range(start, start + count):
            if i in electrodes:
                out[15 * i + 12:15 * i + 15] = odd if k % 2 == 0 else even
                k += 1
    return out


def coordinate_index(system: System, spec: dict) -> int:
    """Global coordinate index of ``{body|beam,node, component}``."""
    L = system.layout
    comp = spec["component"]
    if "body" in spec:
        if spec["body"] not in L.rigid_names:
            raise cfgmod.ConfigError(f"unknown rigid body {spec['body']!r}")
        fields = {**_AXES, **{f: k for k, f in enumerate(_BODY_FIELDS)}}
        if comp not in fields:
            raise cfgmod.ConfigError(f"unknown body component {comp!r}")
        return L.body_slice(L.rigid_names.index(spec["body"])).start + fields[comp]
    if "beam" not in spec:
        raise cfgmod.ConfigError("coordinate needs 'body' or 'beam'")
    bi = L.beam_names.index(spec["beam"]) if spec["beam"] in L.beam_names else None
    if bi is None:
        raise cfgmod.ConfigError(f"unknown beam {spec['beam']!r}")
    node = spec.get("node", "last")
    count = L.beam_node_count[bi]
    node = 0 if node == "first" else count - 1 if node == "last" else int(node)
    if not 0 <= node < count:
        raise cfgmod.ConfigError(f"node {node} outside beam {spec['beam']!r}")
    fields = {**_AXES, **{f: k for k, f in enumerate(NODE_FIELDS)}}
    if comp not in fields:
        raise cfgmod.ConfigError(f"unknown node component {comp!r}")
    return 15 * (L.beam_node_start[bi] + node) + fields[comp]


def initial_state(system: System, doc: dict, pattern: str | None = None) -> np.ndarray:
    """Reference configuration, optionally with a potential pattern on the charge coordinates."""
    q0 = system.reference_q.copy()
    if pattern is not None:
        L = system.layout
        q0[L.charge_idx] = pattern_vector(system, doc["patterns"][pattern])[L.charge_idx]
    return q0


def reference_run(system: System, doc: dict, target: dict, options=None) -> integrator.Trajectory:
    """Forward run from rest under constant prescribed potentials ``target['pattern']``."""
    L = system.layout
    pot = pattern_vector(system, doc["patterns"][target["pattern"]])[L.charge_idx]
    q0 = initial_state(system, doc, target["pattern"])
    steps = target.get("steps", doc["horizon"]["N"])
    return integrator.simulate(system, q0, steps, doc["horizon"]["dt"], potentials=lambda n: pot, options=options)


def _target_pose(system, doc, target):
    traj = reference_run(system, doc, target)
    q = traj.q[-1].copy()
    for c in target.get("overrides", []):
        q[coordinate_index(system, c)] = c["value"]
    return q, traj


@dataclass
class OptimizationSetup:
    system: System
    problem: ocp.NlpProblem
    boundary: ocp.BoundaryData
    guess: np.ndarray
    target_q: np.ndarray


def boundary_data(system: System, doc: dict):
    """Boundary data of the optimal control problem and the final-pose run (if any)."""
    L = system.layout
    b = doc.get("boundary", {})
    final = ocp.FinalCondition()
    pose_traj = None
    if "final_pose" in b:
        q_target, pose_traj = _target_pose(system, doc, b["final_pose"])
        final = ocp.FinalCondition.full_pose(system, q_target)
    for c in b.get("final_coordinates", []):
        final.coordinates.append((coordinate_index(system, c), float(c["value"])))
    fm = b.get("final_momentum", {})
    rows = []
    if fm.get("free_nodes"):
        clamped = set()
        for bi, beam in enumerate(doc["beams"]):
            if beam.get("clamped", False):
                clamped.add(L.beam_node_start[bi])
        free = [i for i in range(L.n_beam_nodes) if i not in clamped]
        rows.append(ocp.BoundaryData.reduced_rows_of_nodes(system, nodes=free))
    for body in fm.get("bodies", []):
        k = L.rigid_names.index(body["name"])
        rows.append(ocp.BoundaryData.reduced_rows_of_nodes(system, bodies=[k],
                                                           components=[_ROWS[c] for c in body["components"]]))
    rows = np.concatenate(rows).astype(int) if rows else np.zeros(0, dtype=int)
    pN = np.zeros(L.n_q)
    if fm.get("target", "zero") == "final-pose-run":
        if pose_traj is None:
            raise cfgmod.ConfigError("boundary.final_momentum.target: final-pose-run needs boundary.final_pose")
        pN = pose_traj.p[-1].copy()
    bd = ocp.BoundaryData(q0=system.reference_q.copy(), final=final, p0=np.zeros(L.n_q), pN=pN,
                          final_momentum_rows=rows)
    return bd, pose_traj


def optimization_setup(doc: dict) -> OptimizationSetup:
    system = system_from(doc)
    bd, pose_traj = boundary_data(system, doc)
    hz = doc["horizon"]
    problem = ocp.transcribe(system, hz["N"], hz["dt"], bd)
    init = doc.get("initialization")
    if init is None:
        raise cfgmod.ConfigError("initialization: required field missing")
    if init.get("guess", "interpolate") == "target-run":
        if "target" not in init:
            raise cfgmod.ConfigError("initialization.target: required for guess target-run")
        target_q, traj = _target_pose(system, doc, init["target"])
        if traj.N != problem.N:
            raise cfgmod.ConfigError("initialization.target.steps: must equal horizon.N for guess target-run")
        return OptimizationSetup(system, problem, bd, problem.from_trajectory(traj), target_q)
    if "pattern" not in init:
        raise cfgmod.ConfigError("initialization.pattern: required field missing")
    if "target" in init:
        target_q, _ = _target_pose(system, doc, init["target"])
    elif pose_traj is not None:
        target_q = pose_traj.q[-1].copy()
    else:
        target_q = system.reference_q.copy()
        for idx, val in bd.final.coordinates:
            target_q[idx] = val
    pat = doc["patterns"][init["pattern"]]
    scale = pat.get("scale", 1.0)
    guess = ocp.initial_guess(problem, target_q, tuple(scale * np.asarray(pat["odd"])),
                              tuple(scale * np.asarray(pat["even"])))
    return OptimizationSetup(system, problem, bd, guess, target_q)


def solver_options(doc: dict, max_iter: int | None = None, tol: float | None = None, verbose: bool = False):
    s = doc.get("solver", {})
    opts = ocp.SolverOptions(verbose=verbose)
    if "name" in s:
        opts.solver = s["name"]
    if "max_iter" in s:
        opts.max_iter = s["max_iter"]
    if "tol_eq" in s:
        opts.tol_eq = s["tol_eq"]
    if "tol_stat" in s:
        opts.tol_stat = s["tol_stat"]
    if "eps_schedule" in s:
        opts.eps_schedule = tuple(s["eps_schedule"])
    if max_iter is not None:
        opts.max_iter = max_iter
    if tol is not None:
        opts.tol_eq = tol
    return opts


def optimize(doc: dict, warm_start=None, options=None):
    """Build and solve the optimal control problem; returns ``(setup, x, report)``."""
    setup = optimization_setup(doc)
    x0 = setup.guess if warm_start is None else np.asarray(warm_start, float)
    if len(x0) != setup.problem.n:
        raise cfgmod.ConfigError(f"warm start has {len(x0)} entries, problem needs {setup.problem.n}")
    x, report = ocp.solve(setup.problem, x0, options or solver_options(doc))
    return setup, x, report


def _phase_schedule(system, doc, phases):
    L = system.layout
    charges, potentials = [], []
    for ph in phases:
        ctl = ph["control"]
        for _ in range(ph["steps"]):
            if ctl == "zero-charge":
                charges.append(np.zeros(L.n_charge))
                potentials.append(None)
            elif ctl == "charges":
                c = np.asarray(ph.get("charges", np.zeros(L.n_charge)), float)
                if c.shape != (L.n_charge,):
                    raise cfgmod.ConfigError(f"simulate.phases.charges: expected {L.n_charge} values")
                charges.append(c)
                potentials.append(None)
            elif ctl == "zero-potential":
                charges.append(np.zeros(L.n_charge))
                potentials.append(np.zeros(L.n_charge))
            else:
                charges.append(np.zeros(L.n_charge))
                potentials.append(pattern_vector(system, doc["patterns"][ph["pattern"]])[L.charge_idx])
    return charges, potentials


def simulate(doc: dict, progress=None, options=None):
    """Forward simulation of the configured phases (default: free motion with zero charges)."""
    system = system_from(doc)
    sim = doc.get("simulate", {})
    phases = sim.get("phases") or [{"steps": doc["horizon"]["N"], "control": "zero-charge"}]
    charges, potentials = _phase_schedule(system, doc, phases)
    q0 = initial_state(system, doc, sim.get("initial_pattern"))
    traj = _run_schedule(system, q0, None, doc["horizon"]["dt"], charges, potentials, progress, options)
    return system, traj


def _run_schedule(system, q0, p0, dt, charges, potentials, progress=None, options=None):
    return integrator.simulate(system, q0, len(charges), dt, p0=p0, charges=lambda n: charges[n],
                               potentials=lambda n: potentials[n], options=options, progress=progress)


def replay(doc: dict, source: integrator.Trajectory, progress=None, options=None):
    """Multi-phase forward run driven by an optimized trajectory.

    Each cycle applies the optimized electrical input (charges, or the
    optimized potentials as prescribed values) and then releases the beam
    with zero potentials for ``stretch_steps`` steps.
    """
    system = system_from(doc)
    L = system.layout
    rp = doc.get("replay", {})
    cycles = rp.get("cycles", 1)
    control = rp.get("control", "charges")
    stretch = rp.get("stretch_steps", 0)
    N = source.N
    charges, potentials = [], []
    for c in range(cycles):
        for n in range(N):
            if control == "charges" and c == 0:
                charges.append(source.Q[n])
                potentials.append(None)
            else:
                charges.append(np.zeros(L.n_charge))
                potentials.append(source.q[n + 1][L.charge_idx].copy())
        for _ in range(stretch):
            charges.append(np.zeros(L.n_charge))
            potentials.append(np.zeros(L.n_charge))
    traj = _run_schedule(system, source.q[0], source.p[0], source.dt, charges, potentials, progress, options)
    return system, traj
