"""Direct transcription of the optimal control problem.

Decision vector (physical units, in this order)::

    q_0 .. q_N | lam_0 .. lam_{N-1} | lamc_0 .. lamc_{N-1} | Q_0 .. Q_{N-1}

``lam_n`` multiplies ``G_ext(q_n)``, ``lamc_n`` multiplies ``G_c(q_n)`` and is
paired with the gaps at ``q_{n+1}``; ``Q_n`` are the charges of interval
``n``.  Equality rows, in order:

* initial mechanical configuration, plus the electric ground at ``q_0``;
* projected initial momentum ``P(q_0)^T [p0 - p_0^-]``;
* constraints ``g(q_n)`` for ``n = 1..N``;
* projected discrete Euler-Lagrange rows ``P(q_n)^T [p_n^+ - p_n^-]`` for
  ``n = 1..N-1``;
* selected projected final momentum rows ``P(q_N)^T [p_N^+ - pN]``;
* final pose rows (centroid plus three skew-rotation rows per node, or single
  coordinates).

Contact gaps ``g_c(q_{n+1})`` are exposed separately together with the
indices of the paired multipliers so that a solver can treat the
complementarity ``g_c >= 0, lamc <= 0, g_c * lamc = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..integrator import IntervalTerms, Trajectory
from ..multibody import Clamp, System
from . import objective as obj


@dataclass
class FinalCondition:
    """Final mechanical condition.

    ``coordinates``: list of ``(global q index, value)`` rows.
    ``poses``: list of ``(block offset, 12-vector target)``; each adds three
    centroid and three skew-rotation rows.
    """

    coordinates: list = field(default_factory=list)
    poses: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.coordinates) + 6 * len(self.poses)

    @classmethod
    def full_pose(cls, system: System, q_target, skip_clamped: bool = True) -> "FinalCondition":
        """All nodes and bodies at ``q_target``, skipping nodes fixed by clamps."""
        L = system.layout
        fixed = set()
        if skip_clamped:
            for c in system.ext_blocks:
                if isinstance(c, Clamp):
                    fixed.add(int(c.dofs[0]))
        offs = [15 * i for i in range(L.n_beam_nodes)] + [L.body_slice(k).start for k in range(L.n_rigid)]
        q_target = np.asarray(q_target, float)
        return cls(poses=[(o, q_target[o:o + 12].copy()) for o in offs if o not in fixed])


@dataclass
class BoundaryData:
    q0: np.ndarray  # initial configuration (mechanical part is imposed)
    final: FinalCondition
    p0: np.ndarray | None = None  # defaults to rest
    pN: np.ndarray | None = None  # defaults to rest
    final_momentum_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))  # reduced rows

    @staticmethod
    def reduced_rows_of_nodes(system: System, nodes=(), bodies=(), components=range(6)) -> np.ndarray:
        """Reduced mechanical row indices (translation 0-2, rotation 3-5)."""
        L = system.layout
        comps = np.asarray(list(components), dtype=int)
        rows = [9 * i + comps for i in nodes]
        rows += [9 * L.n_beam_nodes + 6 * k + comps for k in bodies]
        return np.concatenate(rows).astype(int) if rows else np.zeros(0, dtype=int)


class DecisionLayout:
    def __init__(self, system: System, N: int):
        L = system.layout
        self.N, self.n_q, self.n_ext, self.n_c, self.n_Q = N, L.n_q, L.n_ext, L.n_contact, L.n_charge
        self.off_q = 0
        self.off_l = (N + 1) * self.n_q
        self.off_c = self.off_l + N * self.n_ext
        self.off_Q = self.off_c + N * self.n_c
        self.size = self.off_Q + N * self.n_Q

    def q(self, n):
        return slice(self.off_q + n * self.n_q, self.off_q + (n + 1) * self.n_q)

    def lam(self, n):
        return slice(self.off_l + n * self.n_ext, self.off_l + (n + 1) * self.n_ext)

    def lamc(self, n):
        return slice(self.off_c + n * self.n_c, self.off_c + (n + 1) * self.n_c)

    def Q(self, n):
        return slice(self.off_Q + n * self.n_Q, self.off_Q + (n + 1) * self.n_Q)

    def unpack(self, x):
        x = np.asarray(x, float)
        if x.shape != (self.size,):
            raise ValueError(f"decision vector has length {x.shape}, expected {self.size}")
        N = self.N
        return (
            x[self.off_q:self.off_l].reshape(N + 1, self.n_q),
            x[self.off_l:self.off_c].reshape(N, self.n_ext),
            x[self.off_c:self.off_Q].reshape(N, self.n_c),
            x[self.off_Q:].reshape(N, self.n_Q),
        )

    def pack(self, q, lam, lamc, Q):
        parts = [np.asarray(q, float).ravel(), np.asarray(lam, float).ravel(),
                 np.asarray(lamc, float).ravel(), np.asarray(Q, float).ravel()]
        x = np.concatenate(parts)
        if x.shape != (self.size,):
            raise ValueError("inconsistent block sizes")
        return x

    @property
    def lamc_index(self) -> np.ndarray:
        return np.arange(self.off_c, self.off_Q)


class _Coo:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add(self, row0, col0, M):
        M = sp.coo_matrix(M)
        if M.nnz:
            self.r.append(M.row + row0)
            self.c.append(M.col + col0)
            self.v.append(M.data)

    def add_cols(self, row0, cols, M):
        M = sp.coo_matrix(M)
        if M.nnz:
            self.r.append(M.row + row0)
            self.c.append(np.asarray(cols)[M.col])
            self.v.append(M.data)

    def build(self, shape):
        if not self.r:
            return sp.csr_matrix(shape)
        return sp.csr_matrix((np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=shape)


class NlpProblem:
    """Transcribed optimal control problem with exact sparse first derivatives."""

    def __init__(self, system: System, N: int, dt: float, boundary: BoundaryData):
        if N < 1 or not dt > 0:
            raise ValueError("need N >= 1 and dt > 0")
        self.system, self.N, self.dt, self.boundary = system, N, dt, boundary
        L = system.layout
        self.dec = DecisionLayout(system, N)
        self.n = self.dec.size
        q0 = np.asarray(boundary.q0, float)
        if q0.shape != (L.n_q,):
            raise ValueError(f"q0 has shape {q0.shape}, expected ({L.n_q},)")
        self.q0bar = q0
        self.p0bar = np.zeros(L.n_q) if boundary.p0 is None else np.asarray(boundary.p0, float)
        self.pNbar = np.zeros(L.n_q) if boundary.pN is None else np.asarray(boundary.pN, float)
        if self.p0bar.shape != (L.n_q,) or self.pNbar.shape != (L.n_q,):
            raise ValueError("momentum boundary data must have length n_q")
        self.mech = L.mech_idx
        self.grounded = np.asarray(L.grounded_dofs, dtype=int)
        self.fm_rows = np.asarray(boundary.final_momentum_rows, dtype=int)
        if np.any(self.fm_rows >= L.n_red):
            raise ValueError("final momentum row outside the reduced space")
        self.final_blocks = [Clamp(f"final:{o}", o, tgt) for o, tgt in boundary.final.poses]
        self.final_coords = boundary.final.coordinates
        for idx, _ in self.final_coords:
            if not 0 <= idx < L.n_q:
                raise ValueError(f"final coordinate index {idx} out of range")
        # row offsets
        n_g = L.n_int + L.n_ext
        sizes = {
            "init_q": len(self.mech) + len(self.grounded),
            "init_p": L.n_red,
            "constraints": N * n_g,
            "del": (N - 1) * L.n_red,
            "final_p": len(self.fm_rows),
            "final_q": boundary.final.size,
        }
        self.row_blocks = {}
        off = 0
        for k, s in sizes.items():
            self.row_blocks[k] = (off, s)
            off += s
        self.m = off
        self.m_gap = N * L.n_contact
        self.elec_idx = L.elec_idx

    # -- objective ---------------------------------------------------------
    def objective(self, x) -> float:
        q = self.dec.unpack(x)[0]
        return obj.potential_variation(q[:, self.elec_idx])

    def objective_gradient(self, x) -> np.ndarray:
        q = self.dec.unpack(x)[0]
        g = np.zeros(self.n)
        gq = obj.potential_variation_gradient(q[:, self.elec_idx])
        for n in range(self.N + 1):
            g[self.dec.q(n).start + self.elec_idx] = gq[n]
        return g

    def objective_hessian(self):
        cols = np.concatenate([self.dec.q(n).start + self.elec_idx for n in range(self.N + 1)])
        Hs = obj.potential_variation_hessian(self.N, len(self.elec_idx))
        P = sp.csr_matrix((np.ones(len(cols)), (cols, np.arange(len(cols)))), shape=(self.n, len(cols)))
        return (P @ Hs @ P.T).tocsr()

    # -- constraints -------------------------------------------------------
    def _intervals(self, q, Q, jacobians):
        return [IntervalTerms(self.system, q[n], q[n + 1], Q[n], self.dt, jacobians) for n in range(self.N)]

    def evaluate(self, x, jacobian: bool = True):
        """Return ``(c, A)`` with ``A = dc/dx`` (or ``None``)."""
        s, L, dec, N = self.system, self.system.layout, self.dec, self.N
        q, lam, lamc, Q = dec.unpack(x)
        T = self._intervals(q, Q, jacobian)
        c = np.zeros(self.m)
        J = _Coo() if jacobian else None
        has_c = L.n_contact > 0

        def Gext(n):
            return s.external_jacobian(q[n]) if L.n_ext else sp.csr_matrix((0, L.n_q))

        def Gc(n):
            return s.contact_jacobian(q[n]) if has_c else sp.csr_matrix((0, L.n_q))

        # initial configuration
        r0, _ = self.row_blocks["init_q"]
        nm = len(self.mech)
        c[r0:r0 + nm] = q[0][self.mech] - self.q0bar[self.mech]
        c[r0 + nm:r0 + nm + len(self.grounded)] = q[0][self.grounded]
        if jacobian:
            idx = np.concatenate([self.mech, self.grounded])
            J.add_cols(r0, dec.q(0).start + idx, sp.identity(len(idx)))

        # initial momentum
        r1, n_red = self.row_blocks["init_p"]
        P0 = s.null_space(q[0], strict=False)
        G0, Gc0 = Gext(0), Gc(0)
        r = self.p0bar - T[0].p_minus - 0.5 * (G0.T @ lam[0]) - 0.5 * (Gc0.T @ lamc[0])
        c[r1:r1 + n_red] = P0.T @ r
        if jacobian:
            P0T = P0.T.tocsr()
            dq0 = -T[0].dpm_dqa
            if L.n_ext:
                dq0 = dq0 - 0.5 * s.external_hessian(q[0], lam[0])
            if has_c:
                dq0 = dq0 - 0.5 * s.contact_hessian(q[0], lamc[0])
            J.add(r1, dec.q(0).start, P0T @ dq0 + s.null_space_transpose_apply_jacobian(q[0], r))
            J.add(r1, dec.q(1).start, -(P0T @ T[0].dpm_dqb))
            if L.n_ext:
                J.add(r1, dec.lam(0).start, -0.5 * (P0T @ G0.T))
            if has_c:
                J.add(r1, dec.lamc(0).start, -0.5 * (P0T @ Gc0.T))
            if L.n_charge:
                J.add(r1, dec.Q(0).start, P0T @ T[0].dc_dQ)

        # holonomic constraints at q_1..q_N
        r2, _ = self.row_blocks["constraints"]
        n_g = L.n_int + L.n_ext
        for n in range(1, N + 1):
            row = r2 + (n - 1) * n_g
            c[row:row + n_g] = s.constraints(q[n])
            if jacobian:
                J.add(row, dec.q(n).start, s.constraint_jacobian(q[n]))

        # discrete Euler-Lagrange rows
        r3, _ = self.row_blocks["del"]
        for n in range(1, N):
            row = r3 + (n - 1) * n_red
            Pn = s.null_space(q[n], strict=False)
            Gn, Gcn = Gext(n), Gc(n)
            r = T[n - 1].p_plus - T[n].p_minus - Gn.T @ lam[n] - Gcn.T @ lamc[n]
            c[row:row + n_red] = Pn.T @ r
            if jacobian:
                PnT = Pn.T.tocsr()
                dqn = T[n - 1].dpp_dqb - T[n].dpm_dqa
                if L.n_ext:
                    dqn = dqn - s.external_hessian(q[n], lam[n])
                if has_c:
                    dqn = dqn - s.contact_hessian(q[n], lamc[n])
                J.add(row, dec.q(n - 1).start, PnT @ T[n - 1].dpp_dqa)
                J.add(row, dec.q(n).start, PnT @ dqn + s.null_space_transpose_apply_jacobian(q[n], r))
                J.add(row, dec.q(n + 1).start, -(PnT @ T[n].dpm_dqb))
                if L.n_ext:
                    J.add(row, dec.lam(n).start, -(PnT @ Gn.T))
                if has_c:
                    J.add(row, dec.lamc(n).start, -(PnT @ Gcn.T))
                if L.n_charge:
                    J.add(row, dec.Q(n - 1).start, PnT @ T[n - 1].dc_dQ)
                    J.add(row, dec.Q(n).start, PnT @ T[n].dc_dQ)

        # final momentum
        r4, nf = self.row_blocks["final_p"]
        if nf:
            PN = s.null_space(q[N], strict=False)
            r = T[N - 1].p_plus - self.pNbar
            c[r4:r4 + nf] = (PN.T @ r)[self.fm_rows]
            if jacobian:
                PNT = PN.T.tocsr()[self.fm_rows]
                J.add(r4, dec.q(N - 1).start, PNT @ T[N - 1].dpp_dqa)
                J.add(r4, dec.q(N).start, PNT @ T[N - 1].dpp_dqb
                      + s.null_space_transpose_apply_jacobian(q[N], r)[self.fm_rows])
                if L.n_charge:
                    J.add(r4, dec.Q(N - 1).start, PNT @ T[N - 1].dc_dQ)

        # final pose
        r5, _ = self.row_blocks["final_q"]
        row = r5
        for idx, val in self.final_coords:
            c[row] = q[N][idx] - val
            if jacobian:
                J.add_cols(row, [dec.q(N).start + idx], sp.identity(1))
            row += 1
        for blk in self.final_blocks:
            c[row:row + 6] = blk.residual(q[N])
            if jacobian:
                J.add_cols(row, dec.q(N).start + blk.dofs, blk.local_jacobian(q[N][blk.dofs]))
            row += 6

        return c, (J.build((self.m, self.n)) if jacobian else None)

    def constraints(self, x) -> np.ndarray:
        return self.evaluate(x, jacobian=False)[0]

    def jacobian(self, x):
        return self.evaluate(x, jacobian=True)[1]

    # -- contact complementarity -----------------------------------------
    @property
    def lamc_index(self) -> np.ndarray:
        return self.dec.lamc_index

    def gaps(self, x) -> np.ndarray:
        """Gaps ``g_c(q_{n+1})`` ordered like the multipliers ``lamc_n``."""
        if not self.m_gap:
            return np.zeros(0)
        q = self.dec.unpack(x)[0]
        return np.concatenate([self.system.contact_gaps(q[n + 1]) for n in range(self.N)])

    def gap_jacobian(self, x):
        L = self.system.layout
        J = _Coo()
        if self.m_gap:
            q = self.dec.unpack(x)[0]
            for n in range(self.N):
                J.add(n * L.n_contact, self.dec.q(n + 1).start, self.system.contact_jacobian(q[n + 1]))
        return J.build((self.m_gap, self.n))

    # -- structure ---------------------------------------------------------
    def block_structure(self):
        """Declared Jacobian sparsity as a list of (row slice, column slice) blocks."""
        dec, N, L = self.dec, self.N, self.system.layout
        blocks = []
        r0, n0 = self.row_blocks["init_q"]
        blocks.append((slice(r0, r0 + n0), dec.q(0)))
        r1, n1 = self.row_blocks["init_p"]
        rows = slice(r1, r1 + n1)
        blocks += [(rows, dec.q(0)), (rows, dec.q(1)), (rows, dec.lam(0)), (rows, dec.lamc(0)), (rows, dec.Q(0))]
        r2, _ = self.row_blocks["constraints"]
        n_g = L.n_int + L.n_ext
        for n in range(1, N + 1):
            blocks.append((slice(r2 + (n - 1) * n_g, r2 + n * n_g), dec.q(n)))
        r3, _ = self.row_blocks["del"]
        for n in range(1, N):
            rows = slice(r3 + (n - 1) * L.n_red, r3 + n * L.n_red)
            blocks += [(rows, dec.q(n - 1)), (rows, dec.q(n)), (rows, dec.q(n + 1)), (rows, dec.lam(n)),
                       (rows, dec.lamc(n)), (rows, dec.Q(n - 1)), (rows, dec.Q(n))]
        r4, nf = self.row_blocks["final_p"]
        rows = slice(r4, r4 + nf)
        blocks += [(rows, dec.q(N - 1)), (rows, dec.q(N)), (rows, dec.Q(N - 1))]
        r5, n5 = self.row_blocks["final_q"]
        blocks.append((slice(r5, r5 + n5), dec.q(N)))
        return blocks

    def structure_mask(self):
        mask = sp.lil_matrix((self.m, self.n), dtype=bool)
        for rs, cs in self.block_structure():
            if rs.stop > rs.start and cs.stop > cs.start:
                mask[rs, cs] = True
        return mask.tocsr()

    def census(self) -> dict:
        out = {k: v[1] for k, v in self.row_blocks.items()}
        out.update(n_variables=self.n, n_equalities=self.m, n_gaps=self.m_gap)
        return out

    # -- conversions -------------------------------------------------------
    def from_trajectory(self, traj: Trajectory) -> np.ndarray:
        """Decision vector of a forward trajectory over the same horizon."""
        if traj.N != self.N:
            raise ValueError("trajectory length does not match the horizon")
        lam = np.nan_to_num(traj.lam_ext[:self.N])
        return self.dec.pack(traj.q, lam, traj.lam_c, traj.Q)

    def to_trajectory(self, x) -> Trajectory:
        from ..integrator import interval_energy

        q, lam, lamc, Q = self.dec.unpack(x)
        N, L = self.N, self.system.layout
        p = np.zeros((N + 1, L.n_q))
        p[0] = self.p0bar
        for n, t in enumerate(self._intervals(q, Q, False)):
            p[n + 1] = t.p_plus
        lam_full = np.full((N + 1, L.n_ext), np.nan)
        lam_full[:N] = lam
        energy = np.array([interval_energy(self.system, q[n], q[n + 1], self.dt) for n in range(N)])
        return Trajectory(q.copy(), lam_full, lamc.copy(), Q.copy(), p, energy, self.dt)


def transcribe(system: System, N: int, dt: float, boundary: BoundaryData) -> NlpProblem:
    return NlpProblem(system, N, dt, boundary)
