"""Bundled constrained NLP solver.

Problems have the form::

    min f(x)  s.t.  c(x) = 0,  h(x) >= 0,  x_B <= 0,  h(x) * x_B = 0

where ``x_B`` are the contact multipliers paired with the gaps ``h``.  Slacks
``s = h(x)`` are introduced and the complementarity is relaxed to
``s * (-x_B) + t = eps`` with a further slack ``t >= 0`` and a decreasing
schedule of ``eps``.  The bounds on ``(-x_B, s, t)`` are handled by a
primal-dual log barrier with ``mu`` tied to ``eps``.

Each iteration solves a regularized Newton (KKT) system whose Hessian is the
objective Hessian plus the barrier term; constraint curvature is omitted.
Constraint rows are equilibrated once at the start.  The primal regularization
adapts to the step length, and steps are globalized by second-order
corrections and backtracking on an l1 merit function.  Because stationarity
is degenerate at biactive contact pairs, a stage also ends once the iterate
has stayed feasible with a flat objective for ``stall_iter`` iterations.

Any object exposing ``n``, ``objective``, ``objective_gradient``,
``objective_hessian``, ``evaluate``, ``gaps``, ``gap_jacobian`` and
``lamc_index`` can be solved; other backends can be plugged in with
:func:`register_solver`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class SolverOptions:
    max_iter: int = 300
    tol_eq: float = 1e-6  # unscaled equality infinity norm
    tol_scaled: float = 1e-9  # scaled feasibility
    tol_stat: float = 1e-5  # scaled stationarity
    tol_comp: float = 1e-6
    tol_ineq: float = 1e-8
    eps_schedule: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    delta_w: float = 1e-8
    delta_c: float = 1e-12
    tau: float = 0.995
    armijo: float = 1e-4
    min_step: float = 1e-10
    soc_max: int = 3
    stall_iter: int = 40  # feasible iterations with a flat objective before a stage ends
    barrier: float = 1.0  # barrier parameter relative to eps
    scaling: str = "rows"  # rows | ruiz | none
    verbose: bool = False
    solver: str = "bundled"


@dataclass
class SolverReport:
    status: str  # optimal | max-iter | infeasible
    objective: float
    max_eq_violation: float
    max_ineq_violation: float
    complementarity: float
    stationarity: float
    iterations: int
    wall_time: float = 0.0
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status, "objective": self.objective,
            "max_eq_violation": self.max_eq_violation, "max_ineq_violation": self.max_ineq_violation,
            "complementarity": self.complementarity, "stationarity": self.stationarity,
            "iterations": self.iterations, "wall_time": self.wall_time,
        }


_SOLVERS = {}


def register_solver(name: str, fn):
    """Register ``fn(problem, x0, options) -> (x, SolverReport)`` under ``name``."""
    _SOLVERS[name] = fn


def solve(problem, x0, options: SolverOptions | None = None):
    options = options or SolverOptions()
    if options.solver not in _SOLVERS:
        raise ValueError(f"unknown solver {options.solver!r}; available: {sorted(_SOLVERS)}")
    return _SOLVERS[options.solver](problem, np.asarray(x0, float), options)


def _ruiz(A, iters: int = 12):
    """Row and column scalings making ``D_r |A| D_c`` close to unit infinity norms."""
    A = abs(sp.csr_matrix(A))
    m, n = A.shape
    dr, dc = np.ones(m), np.ones(n)
    for _ in range(iters):
        B = sp.diags(dr) @ A @ sp.diags(dc)
        rmax = np.asarray(B.max(axis=1).todense()).ravel()
        cmax = np.asarray(B.max(axis=0).todense()).ravel()
        dr /= np.sqrt(np.where(rmax > 0, rmax, 1.0))
        dc /= np.sqrt(np.where(cmax > 0, cmax, 1.0))
    return dr, dc


def _scaling(A, mode: str):
    if mode == "ruiz":
        return _ruiz(A)
    if mode == "rows":
        A = abs(sp.csr_matrix(A))
        rmax = np.asarray(A.max(axis=1).todense()).ravel()
        return 1.0 / np.where(rmax > 0, rmax, 1.0), np.ones(A.shape[1])
    if mode == "none":
        return np.ones(A.shape[0]), np.ones(A.shape[1])
    raise ValueError(f"unknown scaling {mode!r}")


class _Augmented:
    """The problem with slacks ``z = [x, s, t]`` and residual ``F(z; eps)``.

    ``s`` stands for the gaps and ``t`` closes the relaxed complementarity
    ``s * (-x_B) <= eps``; ``s``, ``t`` and ``-x_B`` are kept positive.
    """

    def __init__(self, problem):
        self.p = problem
        self.n = problem.n
        self.B = np.asarray(problem.lamc_index, dtype=int)
        self.mg = len(self.B)
        self.nz = self.n + 2 * self.mg
        self.mu = 0.0
        self.w = np.zeros(3 * self.mg)  # bound duals of (-x_B, s, t)

    def split(self, z):
        n, m = self.n, self.mg
        return z[:n], z[n:n + m], z[n + m:]

    def start(self, x, eps):
        """Strictly interior slacks and multipliers near ``x``."""
        x = np.array(x, dtype=float)
        if not self.mg:
            return x
        s = np.maximum(self.p.gaps(x), np.sqrt(eps))
        x[self.B] = np.minimum(x[self.B], -0.1 * eps / s)
        t = np.maximum(eps - s * (-x[self.B]), 0.5 * eps)
        z = np.concatenate([x, s, t])
        self.w = max(eps, 1e-12) / self._bounded(z)
        return z

    def residual(self, z, eps, jacobian=True):
        x, s, t = self.split(z)
        c, Ac = self.p.evaluate(x, jacobian=jacobian)
        if not self.mg:
            return c, Ac
        h = self.p.gaps(x)
        lb = x[self.B]
        F = np.concatenate([c, h - s, s * (-lb) + t - eps])
        if not jacobian:
            return F, None
        Ah = self.p.gap_jacobian(x)
        Kx = sp.csr_matrix((-s, (np.arange(self.mg), self.B)), shape=(self.mg, self.n))
        eye = sp.identity(self.mg)
        A = sp.bmat([
            [Ac, None, None],
            [Ah, -eye, None],
            [Kx, sp.diags(-lb), eye],
        ], format="csr")
        return F, A

    def _bounded(self, z):
        x, s, t = self.split(z)
        return np.concatenate([-x[self.B], s, t])

    def _scatter(self, v):
        """Map a vector over (-x_B, s, t) into z-space, flipping the sign for x_B."""
        out = np.zeros(self.nz)
        m = self.mg
        out[self.B] = -v[:m]
        out[self.n:] = v[m:]
        return out

    def objective(self, z):
        """Objective plus the log barrier ``-mu * sum(log v)`` on the bounded variables."""
        f = self.p.objective(z[:self.n])
        if not self.mg or self.mu == 0.0:
            return f
        v = self._bounded(z)
        if np.any(v <= 0):
            return np.inf
        return f - self.mu * float(np.sum(np.log(v)))

    def gradient(self, z):
        g = np.concatenate([self.p.objective_gradient(z[:self.n]), np.zeros(2 * self.mg)])
        if self.mg and self.mu:
            g += self._scatter(-self.mu / self._bounded(z))
        return g

    def hessian(self, z):
        H = sp.block_diag([self.p.objective_hessian(), sp.csr_matrix((2 * self.mg, 2 * self.mg))], format="csr")
        if self.mg and self.mu:
            d = np.abs(self._scatter(self.w / self._bounded(z)))
            H = (H + sp.diags(d)).tocsr()
        return H

    def update_duals(self, z, dz, alpha, tau, kappa=1e10):
        """Primal-dual update of the bound duals, kept within a band around ``mu / v``."""
        if not self.mg or not self.mu:
            return
        v = self._bounded(z)
        dv = -self._scatter_t(dz)
        dw = self.mu / v - self.w - self.w / v * dv
        neg = dw < 0
        a = 1.0 if not np.any(neg) else float(min(1.0, np.min(-tau * self.w[neg] / dw[neg])))
        v_new = self._bounded(z + alpha * dz)
        self.w = np.clip(self.w + min(a, alpha) * dw, self.mu / (kappa * v_new), kappa * self.mu / v_new)

    def _scatter_t(self, dz):
        """Transpose of :meth:`_scatter` up to sign: ``(x_B, -s, -t)`` components of ``dz``."""
        m = self.mg
        return np.concatenate([dz[self.B], -dz[self.n:self.n + m], -dz[self.n + m:]])

    def boundary_step(self, z, dz, tau):
        """Largest step keeping ``s``, ``t`` and ``-x_B`` positive (fraction to boundary)."""
        if not self.mg:
            return 1.0
        x, s, t = self.split(z)
        dx, ds, dt = self.split(dz)
        vals = np.concatenate([s, t, -x[self.B]])
        dirs = np.concatenate([ds, dt, -dx[self.B]])
        neg = dirs < 0
        if not np.any(neg):
            return 1.0
        return float(min(1.0, np.min(-tau * vals[neg] / dirs[neg])))


    def describe(self, z, dz, Fs):
        """One-line account of the worst residual block and the step-limiting bound."""
        m, mc = self.mg, len(Fs) - 2 * self.mg
        blocks = (("eq", Fs[:mc]), ("gap", Fs[mc:mc + m]), ("comp", Fs[mc + m:]))
        worst = max(blocks, key=lambda b: float(np.max(np.abs(b[1]), initial=0.0)))
        text = f"worst {worst[0]} {float(np.max(np.abs(worst[1]), initial=0.0)):.2e}"
        if m:
            x, s, t = self.split(z)
            dx, ds, dt = self.split(dz)
            for name, v, d in (("lam", -x[self.B], -dx[self.B]), ("s", s, ds), ("t", t, dt)):
                ratio = np.where(d < 0, -v / np.where(d < 0, d, -1.0), np.inf)
                k = int(np.argmin(ratio))
                text += f" | {name}[{k}] {v[k]:.1e}->{ratio[k]:.1e}"
        return text


def _factor_solve(K, rhs, refine: int = 2):
    K = sp.csc_matrix(K)
    lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    sol = _lu_solve(lu, rhs)
    for _ in range(refine):
        sol = sol + _lu_solve(lu, rhs - K @ sol)
    return sol, lu


def _lu_solve(lu, rhs):
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("non-finite KKT solution")
    return sol


def _stationarity(gs, As, y):
    return float(np.max(np.abs(gs + As.T @ y), initial=0.0)) / max(1.0, float(np.max(np.abs(y), initial=0.0)) / 100.0)


def _ls_multipliers(gs, As, delta: float = 1e-10):
    """Multipliers minimizing ``|gs + As^T y|_2``."""
    n, m = As.shape[1], As.shape[0]
    K = sp.bmat([[sp.identity(n), As.T], [As, -delta * sp.identity(m)]], format="csc")
    try:
        sol, _ = _factor_solve(K, np.concatenate([-gs, np.zeros(m)]))
    except (RuntimeError, np.linalg.LinAlgError):
        return None
    return sol[n:]


def _metrics(problem, x):
    c = problem.constraints(x)
    eq = float(np.max(np.abs(c), initial=0.0))
    ineq = comp = 0.0
    if len(problem.lamc_index):
        h = problem.gaps(x)
        lc = x[problem.lamc_index]
        ineq = float(max(0.0, -np.min(h), np.max(lc)))
        comp = float(np.max(np.abs(h * lc)))
    return eq, ineq, comp


def bundled_solve(problem, x0, options: SolverOptions):
    t_start = time.perf_counter()
    aug = _Augmented(problem)
    eps_list = list(options.eps_schedule) if aug.mg else [0.0]
    z = aug.start(x0, eps_list[0])
    F, A = aug.residual(z, eps_list[0])
    dr, dc = _scaling(A, options.scaling)
    y = np.zeros(len(F))
    nu = 1.0
    history = []
    it_total = 0
    status = "max-iter"
    stat = np.inf
    dw, dcr = options.delta_w, options.delta_c
    Dc = sp.diags(dc)
    n_fail = 0
    for stage, eps in enumerate(eps_list):
        aug.mu = options.barrier * eps
        final = stage == len(eps_list) - 1
        tol_f = options.tol_scaled if final else max(options.tol_scaled, 1e-2 * eps)
        tol_s = options.tol_stat if final else max(options.tol_stat, 10.0 * eps)
        F, A = aug.residual(z, eps)
        converged = False
        stalled = 0
        f_prev = np.inf
        while it_total < options.max_iter:
            Fs = dr * F
            As = sp.diags(dr) @ A @ Dc
            gs = dc * aug.gradient(z)
            feas = float(np.max(np.abs(Fs), initial=0.0))
            stat = _stationarity(gs, As, y)
            if feas <= tol_f and stat > tol_s:
                # step multipliers are poor under heavy regularization; try least squares
                y_ls = _ls_multipliers(gs, As)
                if y_ls is not None and _stationarity(gs, As, y_ls) < stat:
                    y = y_ls
                    stat = _stationarity(gs, As, y)
            history.append({"iter": it_total, "eps": eps, "objective": problem.objective(z[:aug.n]), "feas": feas,
                            "stat": stat, "nu": nu})
            if options.verbose:
                print(f"it {it_total:4d} eps {eps:.0e} f {problem.objective(z[:aug.n]):.6e} feas {feas:.3e} stat {stat:.3e}")
            if feas <= tol_f and stat <= tol_s:
                if not final or _metrics(problem, z[:aug.n])[0] <= options.tol_eq:
                    converged = True
                    break
            f_now = history[-1]["objective"]
            flat = abs(f_now - f_prev) <= 1e-6 * max(1.0, abs(f_now))
            stalled = stalled + 1 if (feas <= tol_f and flat) else 0
            f_prev = f_now
            if stalled > options.stall_iter:
                # feasible but not stationary: move on (or give up in the last stage)
                converged = not final
                break
            it_total += 1
            W = (Dc @ aug.hessian(z) @ Dc + dw * sp.identity(aug.nz)).tocsr()
            K = sp.bmat([[W, As.T], [As, -dcr * sp.identity(len(F))]], format="csc")
            rhs = np.concatenate([-gs, -Fs])
            try:
                sol, lu = _factor_solve(K, rhs)
            except (RuntimeError, np.linalg.LinAlgError):
                dw, dcr = max(10 * dw, 1e-8), max(10 * dcr, 1e-10)
                n_fail += 1
                if n_fail > 8:
                    status = "infeasible"
                    break
                continue
            dzs, y_new = sol[:aug.nz], sol[aug.nz:]
            dz = dc * dzs
            alpha_max = aug.boundary_step(z, dz, options.tau)
            if options.verbose:
                print("     " + aug.describe(z, dz, Fs))
            nu = max(nu, 1.1 * float(np.max(np.abs(y_new), initial=0.0)) + 1e-3)
            phi0 = aug.objective(z) + nu * np.sum(np.abs(Fs))
            D = float(aug.gradient(z) @ dz) - nu * np.sum(np.abs(Fs))
            accepted = False
            z_try, phi_try, Fs_try = _trial(aug, z, alpha_max * dz, eps, dr, nu)
            threshold = phi0 + options.armijo * alpha_max * min(D, 0.0)
            alpha = alpha_max
            if phi_try <= threshold:
                accepted = True
            else:
                # second-order corrections reuse the factorization
                step = alpha_max * dz
                for _ in range(options.soc_max):
                    if not np.isfinite(phi_try):
                        break
                    try:
                        corr = dc * _lu_solve(lu, np.concatenate([np.zeros(aug.nz), -Fs_try]))[:aug.nz]
                    except np.linalg.LinAlgError:
                        break
                    a_soc = aug.boundary_step(z, step + corr, options.tau)
                    if a_soc < 1.0:
                        break
                    step = step + corr
                    z_try, phi_try, Fs_try = _trial(aug, z, step, eps, dr, nu)
                    if phi_try <= threshold:
                        accepted = True
                        break
            if not accepted:
                alpha = 0.5 * alpha_max
            while not accepted and alpha >= options.min_step:
                z_try = z + alpha * dz
                try:
                    F_try, _ = aug.residual(z_try, eps, jacobian=False)
                    phi = aug.objective(z_try) + nu * np.sum(np.abs(dr * F_try))
                except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                    phi = np.inf
                if np.isfinite(phi) and phi <= phi0 + options.armijo * alpha * min(D, 0.0):
                    accepted = True
                    break
                alpha *= 0.5
            if options.verbose:
                print(f"     alpha_max {alpha_max:.2e} alpha {alpha if accepted else 0.0:.2e} reg {dw:.1e}")
            # proximal regularization adapts to how much of the step survives
            if accepted and alpha >= alpha_max:
                dw = max(dw / 4.0, options.delta_w)
            elif not accepted or alpha < 0.25 * alpha_max:
                dw = min(max(10.0 * dw, 1e-4), 1e6)
            if not accepted:
                # feasibility restoration: damped Gauss-Newton on ||F||
                z_new = _restore(aug, z, eps, dr, dc, options)
                if z_new is None:
                    status = "infeasible"
                    break
                z = z_new
            else:
                aug.update_duals(z, dz, (z_try - z) @ dz / (dz @ dz), options.tau)
                z = z_try
                y = y_new
            n_fail = 0
            F, A = aug.residual(z, eps)
        if not converged:
            break
    else:
        status = "optimal"
    x = z[:aug.n].copy()
    eq, ineq, comp = _metrics(problem, x)
    if status == "optimal" and (eq > options.tol_eq or ineq > options.tol_ineq or comp > options.tol_comp):
        status = "max-iter"
    report = SolverReport(status, float(problem.objective(x)), eq, ineq, comp, float(stat), it_total,
                          time.perf_counter() - t_start, history)
    return x, report


def _trial(aug, z, step, eps, dr, nu):
    z_try = z + step
    try:
        F_try, _ = aug.residual(z_try, eps, jacobian=False)
        Fs_try = dr * F_try
        return z_try, aug.objective(z_try) + nu * np.sum(np.abs(Fs_try)), Fs_try
    except (ValueError, FloatingPointError, np.linalg.LinAlgError):
        return z_try, np.inf, None


def _restore(aug, z, eps, dr, dc, options, max_iter: int = 20):
    """Reduce the scaled l1 infeasibility with minimum-norm Gauss-Newton steps."""
    Dc = sp.diags(dc)
    for _ in range(max_iter):
        F, A = aug.residual(z, eps)
        Fs = dr * F
        theta0 = np.sum(np.abs(Fs))
        As = sp.diags(dr) @ A @ Dc
        K = sp.bmat([[sp.identity(aug.nz), As.T], [As, -1e-10 * sp.identity(len(F))]], format="csc")
        try:
            sol, _ = _factor_solve(K, np.concatenate([np.zeros(aug.nz), -Fs]))
        except (RuntimeError, np.linalg.LinAlgError):
            return None
        dz = dc * sol[:aug.nz]
        alpha = aug.boundary_step(z, dz, options.tau)
        while alpha >= options.min_step:
            try:
                F_try, _ = aug.residual(z + alpha * dz, eps, jacobian=False)
                theta = np.sum(np.abs(dr * F_try))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError):
                theta = np.inf
            if theta < (1.0 - 1e-4 * alpha) * theta0:
                return z + alpha * dz
            alpha *= 0.5
        return None
    return None


register_solver("bundled", bundled_solve)
