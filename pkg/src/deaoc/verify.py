"""Invariant checks on stored trajectory archives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ocp
from .integrator import Trajectory, interval_energy
from .multibody import System


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    note: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}) {self.note}".rstrip()


def constraint_check(system: System, traj: Trajectory, tol: float = 1e-6) -> Check:
    worst = max(float(np.max(np.abs(system.constraints(q)), initial=0.0)) for q in traj.q)
    return Check("constraints", worst <= tol, worst, tol)


def contact_check(system: System, traj: Trajectory, tol_gap: float = 1e-8, tol_comp: float = 1e-6) -> list:
    if not system.layout.n_contact:
        return []
    gaps = np.array([system.contact_gaps(q) for q in traj.q[1:]])
    lam = traj.lam_c
    return [
        Check("gap non-negativity", float(-gaps.min()) <= tol_gap, float(-gaps.min()), tol_gap),
        Check("contact multiplier sign", float(lam.max()) <= tol_gap, float(lam.max()), tol_gap),
        Check("complementarity", float(np.max(np.abs(gaps * lam))) <= tol_comp,
              float(np.max(np.abs(gaps * lam))), tol_comp),
    ]


def dynamics_problem(system: System, traj: Trajectory) -> ocp.NlpProblem:
    """Transcription over the archived horizon with free final state."""
    bd = ocp.BoundaryData(q0=traj.q[0].copy(), final=ocp.FinalCondition(), p0=traj.p[0].copy())
    return ocp.transcribe(system, traj.N, traj.dt, bd)


def decision_vector(problem: ocp.NlpProblem, traj: Trajectory) -> np.ndarray:
    return problem.from_trajectory(traj)


def dynamics_check(system: System, traj: Trajectory, tol: float = 1e-6) -> Check:
    prob = dynamics_problem(system, traj)
    r = prob.constraints(decision_vector(prob, traj))
    worst = float(np.max(np.abs(r), initial=0.0))
    return Check("discrete dynamics residual", worst <= tol, worst, tol)


def energy_series(system: System, traj: Trajectory) -> np.ndarray:
    return np.array([interval_energy(system, traj.q[n], traj.q[n + 1], traj.dt) for n in range(traj.N)])


def energy_check(system: System, traj: Trajectory, passive_from: int | None) -> list:
    """Dissipation audit over the intervals without electrical input or friction."""
    if passive_from is None:
        return [Check("energy audit", True, 0.0, 0.0, "(skipped: driven system)")]
    E = energy_series(system, traj)[passive_from:]
    if len(E) < 2:
        return [Check("energy audit", True, 0.0, 0.0, "(skipped: driven system)")]
    scale = max(1e-300, float(np.max(np.abs(E))))
    rise = float(np.max(np.diff(E))) / scale
    if system.scenario.material.eta > 0 or any(b.material and b.material.eta > 0 for b in system.scenario.beams):
        tol = 1e-9
        return [Check("energy non-increase", rise <= tol, rise, tol)]
    drift = float(np.max(np.abs(E - E[0]))) / scale
    tol = 1e-2
    return [Check("energy drift", drift <= tol, drift, tol)]


def jacobian_check(problem: ocp.NlpProblem, x, seed: int = 0, n_cols: int = 6, tol: float = 1e-5) -> Check:
    rng = np.random.default_rng(seed)
    A = problem.jacobian(x).tocsc()
    cols = rng.choice(problem.n, size=min(n_cols, problem.n), replace=False)
    worst = 0.0
    for j in cols:
        h = 1e-6 * max(1.0, abs(x[j]))
        e = np.zeros(problem.n)
        e[j] = h
        fd = (problem.constraints(x + e) - problem.constraints(x - e)) / (2 * h)
        col = A[:, j].toarray().ravel()
        worst = max(worst, float(np.max(np.abs(fd - col))) / max(1.0, float(np.max(np.abs(col)))))
    return Check("jacobian spot-check", worst <= tol, worst, tol)


def objective_check(problem: ocp.NlpProblem, x, reported: float) -> Check:
    J = problem.objective(x)
    err = abs(J - reported) / max(1.0, abs(reported))
    return Check("objective recomputation", err <= 1e-12, err, 1e-12)


def optimal_control_checks(problem: ocp.NlpProblem, traj: Trajectory, summary: dict) -> list:
    x = problem.from_trajectory(traj)
    r = problem.constraints(x)
    eq = float(np.max(np.abs(r), initial=0.0))
    rep = summary.get("solver", {})
    tol = float(summary.get("tol_eq", 1e-6))
    out = [Check("transcription equalities", eq <= tol, eq, tol),
           objective_check(problem, x, float(summary.get("objective", problem.objective(x))))]
    if rep:
        st = float(rep.get("stationarity", np.inf))
        out.append(Check("reported stationarity", st <= 1e-5, st, 1e-5))
    return out
