"""Variational time integration with null-space projection.

The discrete Lagrangian uses the midpoint rule for the configuration and a
finite difference for the velocity.  External forcing (viscous forces,
ground friction and electric charges) is evaluated once per interval at the
midpoint and split evenly between the two interval ends.

Sign conventions: holonomic and contact constraints enter the discrete action
as ``-g(q).lam``, so the constraint force in the momentum balance is
``-G^T lam``; with gaps ``g_c >= 0`` this makes contact multipliers
non-positive.  The non-conservative force is ``f = -f_v + friction`` where
``f_v`` is the Kelvin-Voigt force, so that ``f_v . qdot >= 0`` dissipates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .multibody import System


class StepFailure(RuntimeError):
    """Raised when the per-step Newton iteration does not converge."""

    def __init__(self, step: int, message: str, diagnostics: dict | None = None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.diagnostics = diagnostics or {}


@dataclass
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    max_active_set_iter: int = 20
    contact_tol: float = 1e-10


@dataclass
class StepProblem:
    """Data of one forward step ``q_n -> q_{n+1}``.

    ``p_in`` is the multiplier-free incoming momentum at ``q_n`` (either the
    given initial momentum, or ``p_n^+`` without its constraint terms).
    ``weight`` multiplies the constraint forces at ``q_n``: 1 for interior
    steps, 1/2 for the initial step where only ``p_0^-`` carries multipliers.
    """

    q_n: np.ndarray
    p_in: np.ndarray
    Q_n: np.ndarray
    dt: float
    weight: float = 1.0
    fixed_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    fixed_val: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")


@dataclass
class Trajectory:
    q: np.ndarray  # (N+1, n_q)
    lam_ext: np.ndarray  # (N+1, n_ext); row n multiplies G_ext(q_n)
    lam_c: np.ndarray  # (N, n_c); row n enforces the gaps at q_{n+1}
    Q: np.ndarray  # (N, n_charge); charges of interval n
    p: np.ndarray  # (N+1, n_q) multiplier-free p_n^+ (row 0: initial momentum)
    energy: np.ndarray  # (N,) midpoint energy of each interval
    dt: float
    newton_iters: np.ndarray = None

    @property
    def N(self) -> int:
        return len(self.q) - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.N + 1)


# ---------------------------------------------------------------------------
# interval quantities
# ---------------------------------------------------------------------------

def charge_vector(system: System, Q) -> np.ndarray:
    out = np.zeros(system.layout.n_q)
    out[system.layout.charge_idx] = Q
    return out


def charge_matrix(system: System):
    L = system.layout
    idx = L.charge_idx
    return sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(L.n_q, len(idx)))


def discrete_lagrangian(system: System, qa, qb, dt: float) -> float:
    qa, qb = np.asarray(qa, float), np.asarray(qb, float)
    v = (qb - qa) / dt
    return dt * (system.kinetic_energy(v) - system.potential(0.5 * (qa + qb)))


class IntervalTerms:
    """Multiplier-free parts of ``p^-`` (at qa) and ``p^+`` (at qb) for one interval.

    ``p^- = a + b - c`` and ``p^+ = a - b + c`` with ``a = M v``,
    ``b = dt/2 grad V(q_mid)``, ``c = dt/2 (f(q_mid, v) + B Q)``.
    """

    def __init__(self, system: System, qa, qb, Q, dt: float, jacobians: bool = True):
        self.dt = dt
        qa, qb = np.asarray(qa, float), np.asarray(qb, float)
        qm = 0.5 * (qa + qb)
        v = (qb - qa) / dt
        self.qm, self.v = qm, v
        M = system.mass
        self.a = M @ v
        self.b = 0.5 * dt * system.potential_gradient(qm)
        if jacobians:
            f, Fq, Fv = system.applied_force(qm, v, jacobians=True)
        else:
            f = system.applied_force(qm, v)
        self.c = 0.5 * dt * (f + charge_vector(system, Q))
        self.p_minus = self.a + self.b - self.c
        self.p_plus = self.a - self.b + self.c
        if jacobians:
            H = system.potential_hessian(qm)
            dA = M / dt
            dB = 0.25 * dt * H
            dC_qb = 0.5 * dt * (0.5 * Fq + Fv / dt)
            dC_qa = 0.5 * dt * (0.5 * Fq - Fv / dt)
            self.dpm_dqa = (-dA + dB - dC_qa).tocsr()
            self.dpm_dqb = (dA + dB - dC_qb).tocsr()
            self.dpp_dqa = (-dA - dB + dC_qa).tocsr()
            self.dpp_dqb = (dA - dB + dC_qb).tocsr()
            self.dc_dQ = 0.5 * dt * charge_matrix(system)


def interval_energy(system: System, qa, qb, dt: float) -> float:
    """Discrete energy ``T(v) + V(q_mid)`` of one interval."""
    qa, qb = np.asarray(qa, float), np.asarray(qb, float)
    return system.kinetic_energy((qb - qa) / dt) + system.potential(0.5 * (qa + qb))


def legendre_minus(system: System, q_n, q_next, lam_ext, lam_c, Q_n, dt: float) -> np.ndarray:
    """``p_n^- = -D1 L_d + G_c^T lam_c / 2 + G_ext^T lam / 2 - f^-``."""
    t = IntervalTerms(system, q_n, q_next, Q_n, dt, jacobians=False)
    return t.p_minus + _half_constraint_force(system, q_n, lam_ext, lam_c)


def legendre_plus(system: System, q_prev, q_n, lam_ext, lam_c, Q_prev, dt: float) -> np.ndarray:
    """``p_n^+ = D2 L_d - G_c^T lam_c / 2 - G_ext^T lam / 2 + f^+``."""
    t = IntervalTerms(system, q_prev, q_n, Q_prev, dt, jacobians=False)
    return t.p_plus - _half_constraint_force(system, q_n, lam_ext, lam_c)


def _half_constraint_force(system: System, q, lam_ext, lam_c) -> np.ndarray:
    out = np.zeros(system.layout.n_q)
    if system.layout.n_ext and lam_ext is not None:
        out += 0.5 * (system.external_jacobian(q).T @ np.asarray(lam_ext, float))
    if system.layout.n_contact and lam_c is not None:
        out += 0.5 * (system.contact_jacobian(q).T @ np.asarray(lam_c, float))
    return out


def del_residual(system: System, step: StepProblem, q_next, lam_ext, lam_c) -> np.ndarray:
    """Projected discrete Euler-Lagrange residual stacked with ``g(q_{n+1})`` and
    the complementarity products ``g_c(q_{n+1}) * lam_c``."""
    w = step.weight
    t = IntervalTerms(system, step.q_n, q_next, step.Q_n, step.dt, jacobians=False)
    r = step.p_in - 2.0 * w * _half_constraint_force(system, step.q_n, lam_ext, lam_c) - t.p_minus
    P = system.null_space(step.q_n)
    parts = [P.T @ r, system.constraints(q_next)]
    if system.layout.n_contact:
        parts.append(system.contact_gaps(q_next) * np.asarray(lam_c, float))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# step solver
# ---------------------------------------------------------------------------

def elec_reduced_rows(system: System, elec_dofs) -> np.ndarray:
    """Reduced (projected) row index of electrical coordinates."""
    e = np.asarray(elec_dofs, dtype=int)
    node, k = e // 15, e % 15
    if np.any(k < 12) or np.any(node >= system.layout.n_beam_nodes):
        raise ValueError("not an electrical coordinate")
    return 9 * node + (k - 6)


def _solve_sparse(J, rhs):
    try:
        lu = spla.splu(sp.csc_matrix(J))
        x = lu.solve(rhs)
    except RuntimeError as exc:  # exactly singular factor
        raise np.linalg.LinAlgError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("non-finite Newton update")
    return x


class _StepSystem:
    """Newton system for one step with a fixed contact active set."""

    def __init__(self, system: System, step: StepProblem, active: np.ndarray):
        self.system, self.step = system, step
        L = system.layout
        self.active = np.asarray(active, dtype=int)
        self.free = np.setdiff1d(np.arange(L.n_q), step.fixed_idx)
        self.keep_rows = np.setdiff1d(np.arange(L.n_red), elec_reduced_rows(system, step.fixed_idx))
        self.P = system.null_space(step.q_n)
        self.Gn = system.external_jacobian(step.q_n) if L.n_ext else sp.csr_matrix((0, L.n_q))
        self.Gcn = system.contact_jacobian(step.q_n)[self.active] if len(self.active) else sp.csr_matrix((0, L.n_q))
        self.n_free, self.n_ext, self.n_act = len(self.free), L.n_ext, len(self.active)

    def unpack(self, z):
        L = self.system.layout
        q = np.empty(L.n_q)
        q[self.free] = z[:self.n_free]
        q[self.step.fixed_idx] = self.step.fixed_val
        lam = z[self.n_free:self.n_free + self.n_ext]
        lam_c = np.zeros(L.n_contact)
        lam_c[self.active] = z[self.n_free + self.n_ext:]
        return q, lam, lam_c

    def pack(self, q, lam, lam_c):
        return np.concatenate([q[self.free], lam, lam_c[self.active]])

    def evaluate(self, z, jacobian: bool):
        s, st = self.system, self.step
        q, lam, lam_c = self.unpack(z)
        w = st.weight
        t = IntervalTerms(s, st.q_n, q, st.Q_n, st.dt, jacobians=jacobian)
        r = st.p_in - w * (self.Gn.T @ lam) - w * (self.Gcn.T @ lam_c[self.active]) - t.p_minus
        PT = self.P.T.tocsr()
        F = np.concatenate([
            (PT @ r)[self.keep_rows],
            s.constraints(q),
            s.contact_gaps(q)[self.active] if self.n_act else np.zeros(0),
        ])
        if not jacobian:
            return F, None
        PTk = PT[self.keep_rows]
        Gq = s.constraint_jacobian(q)
        blocks = [
            [-(PTk @ t.dpm_dqb)[:, self.free], -w * (PTk @ self.Gn.T), -w * (PTk @ self.Gcn.T)],
            [Gq[:, self.free], None, None],
        ]
        if self.n_act:
            blocks.append([s.contact_jacobian(q)[self.active][:, self.free], None, None])
        J = sp.bmat(blocks, format="csr")
        return F, J


def solve_step(system: System, step: StepProblem, q_guess, active=None, options: NewtonOptions | None = None,
               step_index: int = 0):
    """Solve one forward step; returns ``(q_next, lam_ext, lam_c, info)``."""
    opts = options or NewtonOptions()
    L = system.layout
    active = np.zeros(0, dtype=int) if active is None else np.asarray(sorted(set(active)), dtype=int)
    lam_guess = np.zeros(L.n_ext)
    total_iters = 0
    for _ in range(opts.max_active_set_iter):
        ss = _StepSystem(system, step, active)
        lam_c0 = np.zeros(L.n_contact)
        z = ss.pack(np.asarray(q_guess, float), lam_guess, lam_c0)
        z, iters = _newton(ss, z, opts, step_index)
        total_iters += iters
        q, lam, lam_c = ss.unpack(z)
        if not L.n_contact:
            return q, lam, lam_c, {"iterations": total_iters, "active": active}
        gaps = system.contact_gaps(q)
        positive = [i for i in active if lam_c[i] > opts.contact_tol]
        penetrating = [i for i in range(L.n_contact) if i not in set(active) and gaps[i] < -opts.contact_tol]
        if not positive and not penetrating:
            return q, lam, lam_c, {"iterations": total_iters, "active": active}
        if penetrating:
            worst = min(penetrating, key=lambda i: gaps[i])
            active = np.array(sorted(set(active) | {worst}), dtype=int)
        else:
            worst = max(positive, key=lambda i: lam_c[i])
            active = np.array(sorted(set(active) - {worst}), dtype=int)
        q_guess, lam_guess = q, lam
    raise StepFailure(step_index, "contact active set did not settle", {"active": active.tolist()})


def _newton(ss: _StepSystem, z, opts: NewtonOptions, step_index: int):
    F, J = ss.evaluate(z, jacobian=True)
    row_norm = np.asarray(abs(J).max(axis=1).todense()).ravel()
    scale = 1.0 / np.where(row_norm > 0, row_norm, 1.0)
    phi = np.max(np.abs(scale * F))
    for it in range(opts.max_iter):
        if phi <= opts.tol:
            return z, it
        try:
            dz = _solve_sparse(J, -F)
        except np.linalg.LinAlgError as exc:
            raise StepFailure(step_index, f"singular Newton matrix ({exc})", {"residual": float(phi)})
        t = 1.0
        merit0 = np.sum((scale * F) ** 2)
        for _ in range(opts.max_halvings + 1):
            z_try = z + t * dz
            try:
                F_try, _ = ss.evaluate(z_try, jacobian=False)
                merit = np.sum((scale * F_try) ** 2)
            except (ValueError, FloatingPointError):
                merit = np.inf
            if np.isfinite(merit) and merit <= (1.0 - 1e-4 * t) * merit0:
                break
            t *= 0.5
        else:
            # accept the full step if no decrease was found; Newton near roundoff
            if phi < 1e3 * opts.tol:
                return z, it
            raise StepFailure(step_index, "line search failed", {"residual": float(phi)})
        z = z_try
        F, J = ss.evaluate(z, jacobian=True)
        phi = np.max(np.abs(scale * F))
    if phi <= opts.tol:
        return z, opts.max_iter
    raise StepFailure(step_index, f"Newton did not converge (scaled residual {phi:.3e})", {"residual": float(phi)})


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

def _schedule(value, n, size, default=0.0):
    if value is None:
        return None if default is None else np.full(size, default)
    if callable(value):
        out = value(n)
        return None if out is None else np.asarray(out, float)
    arr = np.asarray(value, float)
    return arr[n] if arr.ndim == 2 else arr


def simulate(system: System, q0, N: int, dt: float, p0=None, charges=None, potentials=None,
             options: NewtonOptions | None = None, progress=None) -> Trajectory:
    """Forward dynamics from ``(q0, p0)`` over ``N`` steps.

    ``charges``: ``(N, n_charge)`` array, a constant vector or a callable
    ``n -> Q_n``.  ``potentials``: optional callable ``n -> values`` on the
    charge coordinates (or ``None`` for charge control in interval ``n``);
    when given, those coordinates of ``q_{n+1}`` are prescribed and the
    charge recorded for interval ``n`` is the one implied by the balance.
    """
    opts = options or NewtonOptions()
    L = system.layout
    q0 = np.asarray(q0, float)
    if np.max(np.abs(system.constraints(q0)), initial=0.0) > 1e-8:
        raise ValueError("initial configuration violates the constraints")
    p_in = np.zeros(L.n_q) if p0 is None else np.asarray(p0, float).copy()
    qs = np.zeros((N + 1, L.n_q))
    qs[0] = q0
    lam_ext = np.full((N + 1, L.n_ext), np.nan)
    lam_c = np.zeros((N, L.n_contact))
    Qs = np.zeros((N, L.n_charge))
    ps = np.zeros((N + 1, L.n_q))
    ps[0] = p_in
    energy = np.zeros(N)
    iters = np.zeros(N, dtype=int)
    active = np.zeros(0, dtype=int)
    charge_idx = L.charge_idx
    for n in range(N):
        Q_n = _schedule(charges, n, L.n_charge)
        pot = _schedule(potentials, n, L.n_charge, default=None)
        fixed_idx = charge_idx if pot is not None else np.zeros(0, dtype=int)
        fixed_val = pot if pot is not None else np.zeros(0)
        step = StepProblem(qs[n], p_in, Q_n, dt, 1.0 if n > 0 else 0.5, fixed_idx, fixed_val)
        guess = qs[n] + (qs[n] - qs[n - 1]) if n > 0 else qs[n].copy()
        guess[fixed_idx] = fixed_val
        q1, lam, lc, info = solve_step(system, step, guess, active, opts, n)
        active = info["active"]
        if pot is not None:
            Q_n = implied_charges(system, step, q1, lam, lc)
        t = IntervalTerms(system, qs[n], q1, Q_n, dt, jacobians=False)
        qs[n + 1], lam_ext[n], lam_c[n], Qs[n] = q1, lam, lc, Q_n
        p_in = t.p_plus
        ps[n + 1] = p_in
        energy[n] = interval_energy(system, qs[n], q1, dt)
        iters[n] = info["iterations"]
        if progress is not None:
            progress(n, qs[n + 1])
    return Trajectory(qs, lam_ext, lam_c, Qs, ps, energy, dt, iters)


def implied_charges(system: System, step: StepProblem, q_next, lam_ext, lam_c) -> np.ndarray:
    """Charges on the charge coordinates that make the electrical balance exact."""
    L = system.layout
    Q0 = np.zeros(L.n_charge)
    t = IntervalTerms(system, step.q_n, q_next, Q0, step.dt, jacobians=False)
    r = step.p_in - 2.0 * step.weight * _half_constraint_force(system, step.q_n, lam_ext, lam_c) - t.p_minus
    # r_e + dt/2 * Q = 0 on charge rows (electrical rows are not projected)
    return -2.0 * r[L.charge_idx] / step.dt


def momentum_initial_step(system: System, q0, p0, Q0, dt, q_guess=None, options=None):
    """Solve the discrete Legendre relation ``p_0 = p_0^-(q_0, q_1, ...)`` for ``q_1``."""
    step = StepProblem(np.asarray(q0, float), np.asarray(p0, float), np.asarray(Q0, float), dt, 0.5)
    guess = np.asarray(q0, float) if q_guess is None else q_guess
    q1, lam, lc, _ = solve_step(system, step, guess, None, options, 0)
    return q1, lam, lc
