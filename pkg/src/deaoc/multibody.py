"""Flexible multibody systems: beams, director-based rigid bodies, joints,
Dirichlet conditions, contact gaps and the ground friction law.

The global configuration vector stores every beam node as a contiguous block
of 15 entries (``[centroid, d1, d2, d3, phi_o, alpha, beta]``), beams in
declaration order, followed by one 12-entry block per rigid body
(``[center, d1, d2, d3]``).  Constraint rows are ordered as: internal
(6 per node/body, pair order 11,12,13,22,23,33), then external blocks in
registration order.  Contact gaps are kept separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import ad, fem
from .cosserat import CrossSection, Material, TABLE1

AXIS_NAMES = ("x", "y", "z")
NODE_FIELDS = (
    "phi_x", "phi_y", "phi_z",
    "d1_x", "d1_y", "d1_z", "d2_x", "d2_y", "d2_z", "d3_x", "d3_y", "d3_z",
    "phi_o", "alpha", "beta",
)
ELECTRIC_FIELDS = ("phi_o", "alpha", "beta")


class SingularGapError(ValueError):
    """Raised when a contact gap is evaluated at coincident points."""


def friction_force(v_x):
    """Regularized Coulomb-like ground friction ``1000/(1+exp(20 v)) - 20 v``.

    Works on floats, arrays and :class:`deaoc.ad.Dual`.  The logistic term is
    evaluated in a form that cannot overflow for large ``|v|``.
    """
    v = ad.value(v_x)
    z = 20.0 * np.asarray(v, dtype=float)
    logistic = 1000.0 * _sigmoid(-z)
    slope = _logistic_slope(z)
    if ad.is_dual(v_x):
        return ad.Dual(logistic - z, v_x.eps * (slope - 20.0)[..., None])
    out = logistic - z
    return float(out) if np.ndim(out) == 0 else out


def friction_slope(v_x):
    return _logistic_slope(20.0 * np.asarray(v_x, dtype=float)) - 20.0


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _logistic_slope(z):
    """Derivative of ``1000/(1+exp(z))`` w.r.t. ``v`` where ``z = 20 v``."""
    e = np.exp(-np.abs(z))
    return -20000.0 * e / (1.0 + e) ** 2


# ---------------------------------------------------------------------------
# scenario description
# ---------------------------------------------------------------------------

@dataclass
class BeamSpec:
    name: str
    length: float
    width: float
    cells: int
    elements_per_cell: int = 1
    origin: tuple = (0.0, 0.0, 0.0)
    triad: np.ndarray | None = None  # rows d1, d2, d3; d3 is the beam axis
    clamped: bool = False
    material: Material | None = None

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"beam {self.name}: length and width must be positive")
        if self.cells < 1 or self.elements_per_cell < 1:
            raise ValueError(f"beam {self.name}: cells and elements_per_cell must be >= 1")
        self.triad = np.eye(3) if self.triad is None else np.asarray(self.triad, dtype=float)
        if np.max(np.abs(self.triad @ self.triad.T - np.eye(3))) > 1e-9:
            raise ValueError(f"beam {self.name}: triad not orthonormal")

    @property
    def n_elements(self) -> int:
        return self.cells * self.elements_per_cell

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def electrode_nodes(self) -> list:
        """Local indices of nodes carrying electrodes (cell boundaries)."""
        return list(range(0, self.n_nodes, self.elements_per_cell))


@dataclass
class RigidBody:
    name: str
    kind: str  # cube | cylinder
    center: np.ndarray
    mass: float
    size: float  # edge length (cube) or radius (cylinder)
    triad: np.ndarray | None = None
    inertia: np.ndarray | None = None  # principal moments about d1, d2, d3
    height: float = 2.0  # cylinder extent along d3

    def __post_init__(self):
        if self.kind not in ("cube", "cylinder"):
            raise ValueError(f"rigid body {self.name}: unknown kind {self.kind!r}")
        if self.mass <= 0 or self.size <= 0:
            raise ValueError(f"rigid body {self.name}: mass and size must be positive")
        self.center = np.asarray(self.center, dtype=float)
        self.triad = np.eye(3) if self.triad is None else np.asarray(self.triad, dtype=float)
        if self.inertia is None:
            m, a = self.mass, self.size
            if self.kind == "cube":
                self.inertia = np.full(3, m * a * a / 6.0)
            else:
                side = m * (3.0 * a * a + self.height**2) / 12.0
                self.inertia = np.array([side, side, 0.5 * m * a * a])
        self.inertia = np.asarray(self.inertia, dtype=float)

    @property
    def director_inertia(self) -> np.ndarray:
        """Director masses ``E_i = tr(J)/2 - J_i`` reproducing the rotational energy."""
        return 0.5 * self.inertia.sum() - self.inertia

    def reference_vector(self) -> np.ndarray:
        return np.concatenate([self.center, self.triad.reshape(-1)])


@dataclass
class Joint:
    """Revolute joint between rigid body ``body`` and node ``node`` of beam ``beam``.

    ``axis`` and ``anchor`` are spatial quantities in the reference
    configuration; ``anchor`` defaults to the beam node position.
    """

    body: str
    beam: str
    node: int
    axis: tuple = (0.0, 1.0, 0.0)
    anchor: tuple | None = None
    type: str = "revolute"


@dataclass
class ContactPair:
    kind: str  # node-cylinder | cube-ground
    beam: str | None = None
    node: int | None = None
    body: str | None = None
    radius: float | None = None
    height: float | None = None


@dataclass
class Scenario:
    beams: list
    material: Material = TABLE1
    rigid_bodies: list = field(default_factory=list)
    joints: list = field(default_factory=list)
    contacts: list = field(default_factory=list)
    friction_bodies: list = field(default_factory=list)
    locked_bodies: list = field(default_factory=list)  # fixed z and rotation
    ground_potential: bool = True
    quad_order: int = 1


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemLayout:
    n_beam_nodes: int
    n_rigid: int
    beam_names: tuple
    beam_node_start: tuple  # global node index of each beam's first node
    beam_node_count: tuple
    rigid_names: tuple
    electrode_nodes: tuple  # global beam node indices
    grounded_dofs: tuple
    ext_names: tuple
    ext_sizes: tuple
    contact_names: tuple

    @property
    def n_q(self) -> int:
        return 15 * self.n_beam_nodes + 12 * self.n_rigid

    @property
    def n_red(self) -> int:
        return 9 * self.n_beam_nodes + 6 * self.n_rigid

    @property
    def n_int(self) -> int:
        return 6 * (self.n_beam_nodes + self.n_rigid)

    @property
    def n_ext(self) -> int:
        return int(sum(self.ext_sizes))

    @property
    def n_contact(self) -> int:
        return len(self.contact_names)

    def node_slice(self, i: int) -> slice:
        return slice(15 * i, 15 * i + 15)

    def body_slice(self, k: int) -> slice:
        o = 15 * self.n_beam_nodes + 12 * k
        return slice(o, o + 12)

    @property
    def elec_idx(self) -> np.ndarray:
        return (15 * np.arange(self.n_beam_nodes)[:, None] + np.arange(12, 15)).ravel()

    @property
    def mech_idx(self) -> np.ndarray:
        mask = np.ones(self.n_q, dtype=bool)
        mask[self.elec_idx] = False
        return np.flatnonzero(mask)

    @property
    def charge_idx(self) -> np.ndarray:
        """Electrical coordinates carrying a charge input: electrode nodes, not grounded."""
        idx = (15 * np.asarray(self.electrode_nodes, dtype=int)[:, None] + np.arange(12, 15)).ravel()
        return np.setdiff1d(idx, np.asarray(self.grounded_dofs, dtype=int))

    @property
    def n_charge(self) -> int:
        return len(self.charge_idx)

    def beam_nodes(self, name: str) -> np.ndarray:
        b = self.beam_names.index(name)
        return self.beam_node_start[b] + np.arange(self.beam_node_count[b])

    def body_index(self, name: str) -> int:
        return self.rigid_names.index(name)

    def ext_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.ext_sizes)]).astype(int)

    def census(self) -> dict:
        return {
            "n_q": self.n_q, "n_beam_nodes": self.n_beam_nodes, "n_rigid": self.n_rigid,
            "n_int": self.n_int, "n_ext": self.n_ext, "n_contact": self.n_contact,
            "n_charge": self.n_charge, "n_red": self.n_red,
        }

    def q_names(self) -> list:
        names = [f"node{i + 1}.{f}" for i in range(self.n_beam_nodes) for f in NODE_FIELDS]
        for name in self.rigid_names:
            names += [f"{name}.{f}" for f in NODE_FIELDS[:12]]
        return names


# ---------------------------------------------------------------------------
# external constraints
# ---------------------------------------------------------------------------

class _LocalConstraint:
    """Constraint acting on a subset ``dofs`` of the global vector.

    Subclasses implement ``local(x)`` with :mod:`deaoc.ad`-compatible
    operations.  Unless overridden, the weighted Hessian assumes the residual
    is at most quadratic, for which polarization of the exact gradient is exact.
    """

    name = "constraint"
    size = 0
    dofs = np.zeros(0, dtype=int)

    def local(self, x):
        raise NotImplementedError

    def residual(self, q) -> np.ndarray:
        return np.asarray(self.local(np.asarray(q, float)[self.dofs]), dtype=float)

    def local_jacobian(self, x) -> np.ndarray:
        y = self.local(ad.seed(x))
        return y.eps if ad.is_dual(y) else np.zeros((self.size, len(x)))

    def local_hessian(self, x, lam) -> np.ndarray:
        n = len(x)
        g0 = lam @ self.local_jacobian(x)
        H = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            H[:, j] = lam @ self.local_jacobian(x + e) - g0
        return 0.5 * (H + H.T)


class Clamp(_LocalConstraint):
    """Fixed centroid and directors: 3 position + 3 skew-rotation equations."""

    size = 6

    def __init__(self, name, node_offset, reference):
        self.name = name
        self.dofs = node_offset + np.arange(12)
        self.ref = np.asarray(reference, dtype=float)[:12].copy()

    def local(self, x):
        r = self.ref
        d1, d2, d3 = x[3:6], x[6:9], x[9:12]
        return ad.concatenate([
            x[0:3] - r[0:3],
            ad.stack([
                0.5 * (ad.dot(r[9:12], d2) - ad.dot(r[6:9], d3)),
                0.5 * (ad.dot(r[3:6], d3) - ad.dot(r[9:12], d1)),
                0.5 * (ad.dot(r[6:9], d1) - ad.dot(r[3:6], d2)),
            ]),
        ])


class RotationLock(_LocalConstraint):
    """Fixed height along z plus locked directors (3 skew equations)."""

    size = 4

    def __init__(self, name, body_offset, reference):
        self.name = name
        self.dofs = body_offset + np.arange(12)
        self.ref = np.asarray(reference, dtype=float)[:12].copy()

    def local(self, x):
        r = self.ref
        d1, d2, d3 = x[3:6], x[6:9], x[9:12]
        return ad.stack([
            x[2] - r[2],
            0.5 * (ad.dot(r[9:12], d2) - ad.dot(r[6:9], d3)),
            0.5 * (ad.dot(r[3:6], d3) - ad.dot(r[9:12], d1)),
            0.5 * (ad.dot(r[6:9], d1) - ad.dot(r[3:6], d2)),
        ])


class GroundHeight(_LocalConstraint):
    """Bilateral normal contact of a cube with the ground: center height fixed."""

    size = 1

    def __init__(self, name, body_offset, height):
        self.name = name
        self.dofs = np.array([body_offset + 2])
        self.height = float(height)

    def local(self, x):
        return x[0:1] - self.height


class PotentialGround(_LocalConstraint):
    """Electric reference potential: ``phi_o = 0`` at one node."""

    size = 1

    def __init__(self, name, dof):
        self.name = name
        self.dofs = np.array([dof])

    def local(self, x):
        return x[0:1] - 0.0


class Revolute(_LocalConstraint):
    """Anchor coincidence (3) and two axis-orthogonality equations."""

    size = 5

    def __init__(self, name, body_offset, body_ref, node_offset, node_ref, axis, anchor):
        self.name = name
        self.dofs = np.concatenate([body_offset + np.arange(12), node_offset + np.arange(12)])
        Db = np.asarray(body_ref[3:12], float).reshape(3, 3)
        Dn = np.asarray(node_ref[3:12], float).reshape(3, 3)
        axis = np.asarray(axis, float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError(f"joint {name}: axis must be a unit vector")
        anchor = np.asarray(anchor, float)
        self.a_body = Db @ (anchor - body_ref[0:3])
        self.a_node = Dn @ (anchor - node_ref[0:3])
        helper = np.eye(3)[np.argmin(np.abs(axis))]
        w1 = np.cross(axis, helper)
        w1 /= np.linalg.norm(w1)
        w2 = np.cross(axis, w1)
        self.zeta = Db @ axis
        self.w1 = Dn @ w1
        self.w2 = Dn @ w2

    @staticmethod
    def _frame_vector(x, off, coef):
        return coef[0] * x[off + 3:off + 6] + coef[1] * x[off + 6:off + 9] + coef[2] * x[off + 9:off + 12]

    def local(self, x):
        pb = x[0:3] + self._frame_vector(x, 0, self.a_body)
        pn = x[12:15] + self._frame_vector(x, 12, self.a_node)
        ab = self._frame_vector(x, 0, self.zeta)
        return ad.concatenate([
            pb - pn,
            ad.stack([ad.dot(ab, self._frame_vector(x, 12, self.w1)),
                      ad.dot(ab, self._frame_vector(x, 12, self.w2))]),
        ])


class NodeCylinderGap(_LocalConstraint):
    """Planar gap ``||(x,y)_node - (x,y)_cyl|| - R`` (z ignored)."""

    size = 1

    def __init__(self, name, node_offset, body_offset, radius):
        self.name = name
        self.dofs = np.array([node_offset, node_offset + 1, body_offset, body_offset + 1])
        self.radius = float(radius)

    def _diff(self, x):
        r = ad.stack([x[0] - x[2], x[1] - x[3]])
        dist = float(np.hypot(*ad.value(r)))
        if dist < 1e-14:
            raise SingularGapError(f"{self.name}: coincident node and cylinder axis")
        return r

    def local(self, x):
        r = self._diff(x)
        return ad.stack([ad.sqrt(ad.dot(r, r)) - self.radius])

    def local_hessian(self, x, lam) -> np.ndarray:
        r = np.asarray(self._diff(np.asarray(x, float)))
        dist = np.linalg.norm(r)
        u = r / dist
        h2 = (np.eye(2) - np.outer(u, u)) / dist
        B = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
        return float(lam[0]) * (B.T @ h2 @ B)


def gap_value(node_xy, body_xy, radius: float) -> float:
    """Scalar gap for a single node/cylinder pair."""
    d = np.asarray(node_xy, float)[:2] - np.asarray(body_xy, float)[:2]
    dist = float(np.hypot(*d))
    if dist < 1e-14:
        raise SingularGapError("coincident node and cylinder axis")
    return dist - float(radius)


def _stack_residuals(blocks, q, size):
    out = np.zeros(size)
    off = 0
    for c in blocks:
        out[off:off + c.size] = c.residual(q)
        off += c.size
    return out


def _stack_jacobians(blocks, q, n_q):
    rows, cols, vals = [], [], []
    off = 0
    q = np.asarray(q, float)
    for c in blocks:
        Jl = c.local_jacobian(q[c.dofs])
        r, k = np.nonzero(Jl)
        rows.append(off + r)
        cols.append(c.dofs[k])
        vals.append(Jl[r, k])
        off += c.size
    if not rows:
        return sp.csr_matrix((0, n_q))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(off, n_q))


def _stack_hessians(blocks, q, lam, n_q):
    rows, cols, vals = [], [], []
    off = 0
    q = np.asarray(q, float)
    for c in blocks:
        H = c.local_hessian(q[c.dofs], np.asarray(lam[off:off + c.size], float))
        r, k = np.nonzero(H)
        rows.append(c.dofs[r])
        cols.append(c.dofs[k])
        vals.append(H[r, k])
        off += c.size
    if not rows:
        return sp.csr_matrix((n_q, n_q))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_q, n_q))


# ---------------------------------------------------------------------------
# system
# ---------------------------------------------------------------------------

class System:
    """A fully indexed flexible multibody system with its evaluators."""

    def __init__(self, scenario: Scenario, layout: SystemLayout, mesh: fem.BeamMesh,
                 reference_q: np.ndarray, ext_blocks: list, contact_blocks: list,
                 friction_dofs: np.ndarray):
        self.scenario = scenario
        self.layout = layout
        self.mesh = mesh
        self.reference_q = reference_q
        self.ext_blocks = ext_blocks
        self.contact_blocks = contact_blocks
        self.friction_dofs = friction_dofs
        self.has_damping = bool(np.any(mesh.eta > 0))
        self.mass = self._assemble_mass()
        self._int_hess_cache = None

    # -- mass / energies --------------------------------------------------
    def _assemble_mass(self):
        n_q = self.layout.n_q
        M = fem.assemble_mass(self.mesh, n_q) if self.mesh.n_elements else sp.csr_matrix((n_q, n_q))
        diag = np.zeros(n_q)
        for k, rb in enumerate(self.scenario.rigid_bodies):
            o = self.layout.body_slice(k).start
            diag[o:o + 3] = rb.mass
            for i in range(3):
                diag[o + 3 + 3 * i:o + 6 + 3 * i] = rb.director_inertia[i]
        return (M + sp.diags(diag)).tocsr()

    def kinetic_energy(self, v) -> float:
        v = np.asarray(v, float)
        return 0.5 * float(v @ (self.mass @ v))

    def potential(self, q) -> float:
        return fem.assemble_energy(self.mesh, q) if self.mesh.n_elements else 0.0

    def potential_gradient(self, q) -> np.ndarray:
        return fem.assemble_internal_forces(self.mesh, q, self.layout.n_q)

    def potential_hessian(self, q):
        return fem.assemble_stiffness(self.mesh, q, self.layout.n_q)

    # -- applied forces ---------------------------------------------------
    def applied_force(self, q, v, jacobians: bool = False):
        """Non-conservative force ``-f_v(q, v) + friction(v)``.

        With ``jacobians=True`` returns ``(f, df/dq, df/dv)``.
        """
        n_q = self.layout.n_q
        v = np.asarray(v, float)
        fr = np.zeros(n_q)
        if len(self.friction_dofs):
            fr[self.friction_dofs] = friction_force(v[self.friction_dofs])
        if not jacobians:
            f = fr
            if self.has_damping:
                f = f - fem.assemble_viscous_forces(self.mesh, q, v, n_q)
            return f
        if self.has_damping:
            fv, Kq, Kv = fem.assemble_viscous_jacobians(self.mesh, q, v, n_q)
        else:
            fv, Kq, Kv = np.zeros(n_q), sp.csr_matrix((n_q, n_q)), sp.csr_matrix((n_q, n_q))
        dfr = np.zeros(n_q)
        if len(self.friction_dofs):
            dfr[self.friction_dofs] = friction_slope(v[self.friction_dofs])
        return fr - fv, (-Kq).tocsr(), (sp.diags(dfr) - Kv).tocsr()

    # -- constraints ------------------------------------------------------
    def _director_blocks(self):
        L = self.layout
        offs = [15 * i for i in range(L.n_beam_nodes)] + [L.body_slice(k).start for k in range(L.n_rigid)]
        return np.asarray(offs, dtype=int)

    def internal_constraints(self, q) -> np.ndarray:
        q = np.asarray(q, float)
        offs = self._director_blocks()
        nodes = q[offs[:, None] + np.arange(12)]
        return fem.director_constraints(nodes).ravel()

    def internal_jacobian(self, q):
        q = np.asarray(q, float)
        rows, cols, vals = [], [], []
        for b, o in enumerate(self._director_blocks()):
            G = fem.director_constraint_gradient(q[o:o + 12])
            r, k = np.nonzero(G)
            rows.append(6 * b + r)
            cols.append(o + k)
            vals.append(G[r, k])
        n = 6 * len(self._director_blocks())
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, self.layout.n_q))

    def internal_hessian(self, lam):
        """``sum_k lam_k * Hess(g_int_k)`` (constant in q)."""
        rows, cols, vals = [], [], []
        for b, o in enumerate(self._director_blocks()):
            for r, (i, j) in enumerate(fem.CONSTRAINT_PAIRS):
                w = lam[6 * b + r] * (2.0 if i == j else 1.0)
                for c in range(3):
                    a, bb = o + 3 + 3 * i + c, o + 3 + 3 * j + c
                    if i == j:
                        rows.append(a); cols.append(a); vals.append(w)
                    else:
                        rows += [a, bb]; cols += [bb, a]; vals += [w, w]
        n_q = self.layout.n_q
        return sp.csr_matrix((vals, (rows, cols)), shape=(n_q, n_q))

    def external_constraints(self, q) -> np.ndarray:
        return _stack_residuals(self.ext_blocks, q, self.layout.n_ext)

    def external_jacobian(self, q):
        return _stack_jacobians(self.ext_blocks, q, self.layout.n_q)

    def external_hessian(self, q, lam):
        return _stack_hessians(self.ext_blocks, q, lam, self.layout.n_q)

    def constraints(self, q) -> np.ndarray:
        return np.concatenate([self.internal_constraints(q), self.external_constraints(q)])

    def constraint_jacobian(self, q):
        return sp.vstack([self.internal_jacobian(q), self.external_jacobian(q)]).tocsr()

    def contact_gaps(self, q) -> np.ndarray:
        return _stack_residuals(self.contact_blocks, q, self.layout.n_contact)

    def contact_jacobian(self, q):
        return _stack_jacobians(self.contact_blocks, q, self.layout.n_q)

    def contact_hessian(self, q, lam):
        return _stack_hessians(self.contact_blocks, q, lam, self.layout.n_q)

    # -- null space -------------------------------------------------------
    def null_space(self, q, strict: bool = True):
        """Block-diagonal internal null-space matrix, ``n_q x n_red``."""
        q = np.asarray(q, float)
        L = self.layout
        tol = 1e-6 if strict else None
        blocks = [fem.internal_null_space(q[L.node_slice(i)], electric=True, tol=tol) for i in range(L.n_beam_nodes)]
        blocks += [fem.internal_null_space(q[L.body_slice(k)], electric=False, tol=tol) for k in range(L.n_rigid)]
        return sp.block_diag(blocks, format="csr")

    def null_space_transpose_apply_jacobian(self, q, w):
        """Jacobian of ``P(q)^T w`` with respect to ``q`` for fixed ``w``.

        Only the rotational columns depend on ``q``: ``(-hat(d_i))^T w_i =
        hat(d_i) w_i = d_i x w_i``, whose derivative w.r.t. ``d_i`` is
        ``-hat(w_i)``.
        """
        q = np.asarray(q, float)
        w = np.asarray(w, float)
        L = self.layout
        rows, cols, vals = [], [], []
        red = 0
        for b, o in enumerate(self._director_blocks()):
            for i in range(3):
                S = -fem.skew(w[o + 3 + 3 * i:o + 6 + 3 * i])
                r, c = np.nonzero(S)
                rows.append(red + 3 + r)
                cols.append(o + 3 + 3 * i + c)
                vals.append(S[r, c])
            red += 9 if b < L.n_beam_nodes else 6
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(L.n_red, L.n_q))

    # -- helpers -----------------------------------------------------------
    def node_position(self, q, node: int) -> np.ndarray:
        return np.asarray(q)[15 * node:15 * node + 3]

    def body_center(self, q, name: str) -> np.ndarray:
        s = self.layout.body_slice(self.layout.body_index(name))
        return np.asarray(q)[s][0:3]

    def linear_momentum(self, p) -> np.ndarray:
        """Sum of centroid/center rows of a momentum covector."""
        p = np.asarray(p, float)
        L = self.layout
        idx = [15 * i + np.arange(3) for i in range(L.n_beam_nodes)]
        idx += [L.body_slice(k).start + np.arange(3) for k in range(L.n_rigid)]
        if not idx:
            return np.zeros(3)
        return p[np.array(idx)].sum(axis=0)


def _resolve_node(spec: BeamSpec, node) -> int:
    if node in ("first", None):
        return 0
    if node == "last":
        return spec.n_nodes - 1
    node = int(node)
    if not 0 <= node < spec.n_nodes:
        raise ValueError(f"node {node} outside beam {spec.name} (0..{spec.n_nodes - 1})")
    return node


def build_system(scenario: Scenario) -> System:
    """Index all bodies and constraints of ``scenario`` and assemble its evaluators."""
    beams = list(scenario.beams)
    names = [b.name for b in beams]
    if len(set(names)) != len(names):
        raise ValueError("duplicate beam names")
    rb_names = [r.name for r in scenario.rigid_bodies]
    if len(set(rb_names)) != len(rb_names):
        raise ValueError("duplicate rigid body names")

    starts, counts, meshes, refs, electrodes = [], [], [], [], []
    node0 = 0
    for b in beams:
        section = CrossSection.square(b.width)
        material = b.material or scenario.material
        node_dofs = 15 * node0 + np.arange(15 * b.n_nodes).reshape(b.n_nodes, 15)
        ref = fem.straight_reference(b.n_nodes, b.length, b.origin, b.triad)
        meshes.append(fem.BeamMesh.from_nodes(node_dofs, ref, section, material, scenario.quad_order))
        refs.append(ref)
        starts.append(node0)
        counts.append(b.n_nodes)
        electrodes += [node0 + i for i in b.electrode_nodes]
        node0 += b.n_nodes
    n_bn = node0
    mesh = fem.BeamMesh.merge(meshes) if meshes else None

    n_q = 15 * n_bn + 12 * len(scenario.rigid_bodies)
    q_ref = np.zeros(n_q)
    for s, ref in zip(starts, refs):
        q_ref[15 * s:15 * (s + len(ref))] = ref.reshape(-1)
    rb_off = {r.name: 15 * n_bn + 12 * k for k, r in enumerate(scenario.rigid_bodies)}
    for r in scenario.rigid_bodies:
        q_ref[rb_off[r.name]:rb_off[r.name] + 12] = r.reference_vector()

    def beam_of(name):
        if name not in names:
            raise ValueError(f"unknown beam {name!r}")
        return names.index(name)

    def body_of(name):
        if name not in rb_off:
            raise ValueError(f"unknown rigid body {name!r}")
        return rb_off[name]

    ext, grounded = [], []
    for bi, b in enumerate(beams):
        if b.clamped:
            o = 15 * starts[bi]
            ext.append(Clamp(f"clamp:{b.name}", o, q_ref[o:o + 12]))
    for j in scenario.joints:
        if j.type != "revolute":
            raise ValueError(f"unsupported joint type {j.type!r}")
        bi = beam_of(j.beam)
        node = starts[bi] + _resolve_node(beams[bi], j.node)
        ob, on = body_of(j.body), 15 * node
        anchor = q_ref[on:on + 3] if j.anchor is None else np.asarray(j.anchor, float)
        ext.append(Revolute(f"joint:{j.body}:{j.beam}", ob, q_ref[ob:ob + 12], on, q_ref[on:on + 12],
                            j.axis, anchor))
    contacts = []
    for c in scenario.contacts:
        if c.kind == "cube-ground":
            ob = body_of(c.body)
            h = q_ref[ob + 2] if c.height is None else c.height
            ext.append(GroundHeight(f"ground:{c.body}", ob, h))
        elif c.kind == "node-cylinder":
            bi = beam_of(c.beam)
            node = starts[bi] + _resolve_node(beams[bi], c.node)
            rb = scenario.rigid_bodies[rb_names.index(c.body)]
            radius = rb.size if c.radius is None else c.radius
            contacts.append(NodeCylinderGap(f"contact:{c.beam}:{node - starts[bi] + 1}", 15 * node,
                                            body_of(c.body), radius))
        else:
            raise ValueError(f"unknown contact kind {c.kind!r}")
    for name in scenario.locked_bodies:
        ob = body_of(name)
        ext.append(RotationLock(f"lock:{name}", ob, q_ref[ob:ob + 12]))
    if scenario.ground_potential:
        for bi, b in enumerate(beams):
            dof = 15 * starts[bi] + 12
            ext.append(PotentialGround(f"ground_potential:{b.name}", dof))
            grounded.append(dof)
    friction = np.array([body_of(n) for n in scenario.friction_bodies], dtype=int)

    layout = SystemLayout(
        n_beam_nodes=n_bn,
        n_rigid=len(scenario.rigid_bodies),
        beam_names=tuple(names),
        beam_node_start=tuple(starts),
        beam_node_count=tuple(counts),
        rigid_names=tuple(rb_names),
        electrode_nodes=tuple(electrodes),
        grounded_dofs=tuple(grounded),
        ext_names=tuple(c.name for c in ext),
        ext_sizes=tuple(c.size for c in ext),
        contact_names=tuple(c.name for c in contacts),
    )
    if mesh is None:
        mesh = fem.BeamMesh(np.zeros((0, 2, 15), int), np.zeros(0), [], [], [], np.zeros((0, 15), int),
                            np.zeros((0, 15)), scenario.quad_order)
    return System(scenario, layout, mesh, q_ref, ext, contacts, friction)
