"""Finite element semidiscretization of DEA beams.

Two-node elements with linear shape functions interpolate centroid, directors
and electric variables alike; directors are not re-orthonormalized inside an
element.  Orthonormality is imposed only at the nodes through six internal
constraints per node, and eliminated from the dynamics with the node-wise
null-space matrix returned by :func:`internal_null_space`.

Node-local vectors use the 15-entry layout
``[centroid(3), d1(3), d2(3), d3(3), phi_o, alpha, beta]``; rigid bodies use
the first 12 entries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import ad
from .cosserat import (
    ConstraintViolationError,
    CrossSection,
    Material,
    NodeState,
    resultant_kernel,
    energy_kernel,
    strain_kernel,
)

# (i, j) director pairs, in the fixed internal-constraint order 11,12,13,22,23,33
CONSTRAINT_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


@dataclass(frozen=True)
class MassModel:
    A_rho: float  # g/mm
    M1_rho: float  # g*mm
    M2_rho: float  # g*mm

    def __post_init__(self):
        if min(self.A_rho, self.M1_rho, self.M2_rho) <= 0:
            raise ValueError("mass model entries must be positive")

    @classmethod
    def from_section(cls, section: CrossSection, material: Material) -> "MassModel":
        return cls(material.rho * section.A, material.rho * section.I1, material.rho * section.I2)


@dataclass
class BeamMesh:
    """Elements of one or more beams, addressed through global dof indices.

    ``elem_dofs[e, a]`` lists the 15 global indices of local node ``a`` of
    element ``e``.  Section and material data are stored per element so that
    several beams can be merged into a single vectorized mesh.
    """

    elem_dofs: np.ndarray  # (n_el, 2, 15) int
    lengths: np.ndarray  # (n_el,)
    sections: list
    materials: list
    masses: list
    node_dofs: np.ndarray  # (n_nodes, 15) int, mesh node order
    reference: np.ndarray  # (n_nodes, 15) reference node states
    quad_order: int = 1
    _params: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.elem_dofs = np.asarray(self.elem_dofs, dtype=int).reshape(-1, 2, 15)
        self.lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        if np.any(self.lengths <= 0):
            raise ValueError("element reference lengths must be positive")
        n_el = len(self.lengths)
        if not (len(self.sections) == len(self.materials) == len(self.masses) == n_el):
            raise ValueError("per-element data length mismatch")
        s, m = self.sections, self.materials
        self._params = tuple(
            np.array(v, dtype=float)
            for v in (
                [x.A for x in s], [x.I1 for x in s], [x.I2 for x in s], [x.J for x in s],
                [x.E for x in m], [x.G for x in m], [x.c1 for x in m], [x.c2 for x in m],
            )
        )
        self.eta = np.array([x.eta for x in m], dtype=float)

    @property
    def n_elements(self) -> int:
        return len(self.lengths)

    @property
    def params(self) -> tuple:
        return self._params

    @classmethod
    def straight(cls, n_elements: int, length: float, section: CrossSection, material: Material,
                 origin=(0.0, 0.0, 0.0), triad=None, dof_offset: int = 0, quad_order: int = 1):
        """A single straight beam with consecutive 15-dof node blocks.

        The beam axis is the third row of ``triad`` (default: identity).
        """
        triad = np.eye(3) if triad is None else np.asarray(triad, dtype=float)
        n_nodes = n_elements + 1
        node_dofs = dof_offset + np.arange(15 * n_nodes).reshape(n_nodes, 15)
        return cls.from_nodes(node_dofs, straight_reference(n_nodes, length, origin, triad),
                              section, material, quad_order)

    @classmethod
    def from_nodes(cls, node_dofs, reference, section, material, quad_order=1):
        node_dofs = np.asarray(node_dofs, dtype=int)
        reference = np.asarray(reference, dtype=float)
        n_el = len(node_dofs) - 1
        lengths = np.linalg.norm(np.diff(reference[:, 0:3], axis=0), axis=1)
        elem_dofs = np.stack([node_dofs[:-1], node_dofs[1:]], axis=1)
        mass = MassModel.from_section(section, material)
        return cls(elem_dofs, lengths, [section] * n_el, [material] * n_el, [mass] * n_el,
                   node_dofs, reference, quad_order)

    @classmethod
    def merge(cls, meshes):
        meshes = list(meshes)
        orders = {m.quad_order for m in meshes}
        if len(orders) != 1:
            raise ValueError("merged meshes must share the quadrature order")
        return cls(
            np.concatenate([m.elem_dofs for m in meshes]),
            np.concatenate([m.lengths for m in meshes]),
            sum((m.sections for m in meshes), []),
            sum((m.materials for m in meshes), []),
            sum((m.masses for m in meshes), []),
            np.concatenate([m.node_dofs for m in meshes]),
            np.concatenate([m.reference for m in meshes]),
            orders.pop(),
        )


def straight_reference(n_nodes: int, length: float, origin=(0.0, 0.0, 0.0), triad=None) -> np.ndarray:
    triad = np.eye(3) if triad is None else np.asarray(triad, dtype=float)
    s = np.linspace(0.0, length, n_nodes)
    ref = np.zeros((n_nodes, 15))
    ref[:, 0:3] = np.asarray(origin, dtype=float) + s[:, None] * triad[2]
    ref[:, 3:12] = triad.reshape(-1)
    return ref


# ---------------------------------------------------------------------------
# interpolation and quadrature
# ---------------------------------------------------------------------------

def gauss_points(order: int):
    """Gauss-Legendre points and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def interpolate(qa, qb, length: float, xi: float):
    """State and arc-length derivative at local coordinate ``xi`` in [0, 1].

    ``qa``, ``qb`` are the 15-vectors (or NodeStates) of the element nodes.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"local coordinate {xi} outside [0, 1]")
    if isinstance(qa, NodeState):
        qa, qb = qa.to_vector(), qb.to_vector()
    qa, qb = np.asarray(qa, float), np.asarray(qb, float)
    x = (1.0 - xi) * qa + xi * qb
    xs = (qb - qa) / length
    return NodeState.from_vector(x), NodeState.from_vector(xs)


def shape_functions(xi):
    return np.array([1.0 - xi, xi])


# ---------------------------------------------------------------------------
# element kernels
# ---------------------------------------------------------------------------

def _generalized_force(x, xs, n, m, e, t):
    """Work-conjugate forces on (x, xs) for given stress resultants.

    Returns the partial derivatives ``(g_x, g_xs)`` of
    ``n.Gamma + m.K + e.Xi + t.Theta`` with the resultants held fixed.
    """
    phi_s = xs[..., 0:3]
    d1, d2, d3 = x[..., 3:6], x[..., 6:9], x[..., 9:12]
    d1s, d2s, d3s = xs[..., 3:6], xs[..., 6:9], xs[..., 9:12]
    n1, n2, n3 = n[..., 0:1], n[..., 1:2], n[..., 2:3]
    m1, m2, m3 = m[..., 0:1], m[..., 1:2], m[..., 2:3]
    zero3 = 0.0 * phi_s
    zero1 = 0.0 * phi_s[..., 0:1]
    gx = ad.concatenate(
        [
            zero3,
            n1 * phi_s + 0.5 * (m2 * d3s - m3 * d2s),
            n2 * phi_s + 0.5 * (m3 * d1s - m1 * d3s),
            n3 * phi_s + 0.5 * (m1 * d2s - m2 * d1s),
            zero1,
            -e[..., 0:1],
            -e[..., 1:2],
        ]
    )
    gxs = ad.concatenate(
        [
            n1 * d1 + n2 * d2 + n3 * d3,
            0.5 * (m3 * d2 - m2 * d3),
            0.5 * (m1 * d3 - m3 * d1),
            0.5 * (m2 * d1 - m1 * d2),
            -e[..., 2:3],
            -t[..., 0:1],
            -t[..., 1:2],
        ]
    )
    return gx, gxs


def element_energy(qa, qb, lengths, params, quad_order=1):
    out = 0.0
    for xi, w in zip(*gauss_points(quad_order)):
        x = (1.0 - xi) * qa + xi * qb
        xs = (qb - qa) / lengths[..., None]
        out = out + w * lengths * energy_kernel(*strain_kernel(x, xs), params)
    return out


def element_forces(qa, qb, lengths, params, quad_order=1):
    """Gradient of the element energy w.r.t. both node vectors."""
    fa = fb = 0.0
    L = lengths[..., None]
    for xi, w in zip(*gauss_points(quad_order)):
        x = (1.0 - xi) * qa + xi * qb
        xs = (qb - qa) / L
        gx, gxs = _generalized_force(x, xs, *resultant_kernel(*strain_kernel(x, xs), params))
        fa = fa + w * (L * (1.0 - xi) * gx - gxs)
        fb = fb + w * (L * xi * gx + gxs)
    return fa, fb


def _strain_rates(x, xs, v, vs):
    phi_s, vphi_s = xs[..., 0:3], vs[..., 0:3]
    d = [x[..., 3:6], x[..., 6:9], x[..., 9:12]]
    ds = [xs[..., 3:6], xs[..., 6:9], xs[..., 9:12]]
    vd = [v[..., 3:6], v[..., 6:9], v[..., 9:12]]
    vds = [vs[..., 3:6], vs[..., 6:9], vs[..., 9:12]]
    gamma_dot = ad.stack([ad.dot(vphi_s, d[i]) + ad.dot(phi_s, vd[i]) for i in range(3)])

    def kdot(a, b):  # rate of 0.5*(ds[a].d[b] - ds[b].d[a])
        return 0.5 * (
            ad.dot(vds[a], d[b]) + ad.dot(ds[a], vd[b]) - ad.dot(vds[b], d[a]) - ad.dot(ds[b], vd[a])
        )

    kappa_dot = ad.stack([kdot(1, 2), kdot(2, 0), kdot(0, 1)])
    return gamma_dot, kappa_dot


def element_strain_rates(qa, qb, va, vb, lengths, xi=0.5):
    L = lengths[..., None]
    x = (1.0 - xi) * qa + xi * qb
    return _strain_rates(x, (qb - qa) / L, (1.0 - xi) * va + xi * vb, (vb - va) / L)


def element_viscous_forces(qa, qb, va, vb, lengths, eta, quad_order=1):
    """Kelvin-Voigt force ``int (M_v dGamma/dq + N_v dK/dq) ds`` on both nodes."""
    fa = fb = 0.0
    L = lengths[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    for xi, w in zip(*gauss_points(quad_order)):
        x = (1.0 - xi) * qa + xi * qb
        xs = (qb - qa) / L
        gdot, kdot = _strain_rates(x, xs, (1.0 - xi) * va + xi * vb, (vb - va) / L)
        zero = 0.0 * gdot
        gx, gxs = _generalized_force(x, xs, eta * gdot, eta * kdot, zero, zero)
        fa = fa + w * (L * (1.0 - xi) * gx - gxs)
        fb = fb + w * (L * xi * gx + gxs)
    return fa, fb


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _gather(mesh: BeamMesh, q):
    q = np.asarray(q, dtype=float)
    return q[mesh.elem_dofs[:, 0]], q[mesh.elem_dofs[:, 1]]


def _scatter(mesh: BeamMesh, fa, fb, size: int) -> np.ndarray:
    out = np.zeros(size)
    np.add.at(out, mesh.elem_dofs[:, 0], fa)
    np.add.at(out, mesh.elem_dofs[:, 1], fb)
    return out


def _local_matrix_to_sparse(mesh: BeamMesh, Ke, size: int):
    """Assemble element matrices ``Ke`` of shape (n_el, 30, 30) (rows, cols over both nodes)."""
    dofs = mesh.elem_dofs.reshape(-1, 30)
    rows = np.repeat(dofs[:, :, None], 30, axis=2)
    cols = np.repeat(dofs[:, None, :], 30, axis=1)
    return sp.csr_matrix((Ke.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size))


def assemble_energy(mesh: BeamMesh, q) -> float:
    qa, qb = _gather(mesh, q)
    return float(np.sum(element_energy(qa, qb, mesh.lengths, mesh.params, mesh.quad_order)))


def assemble_internal_forces(mesh: BeamMesh, q, size: int | None = None) -> np.ndarray:
    """Gradient of the assembled potential energy w.r.t. the global vector ``q``."""
    size = len(q) if size is None else size
    qa, qb = _gather(mesh, q)
    fa, fb = element_forces(qa, qb, mesh.lengths, mesh.params, mesh.quad_order)
    return _scatter(mesh, fa, fb, size)


def assemble_stiffness(mesh: BeamMesh, q, size: int | None = None):
    """Sparse Hessian of the potential energy (tangent stiffness)."""
    size = len(q) if size is None else size
    qa, qb = _gather(mesh, q)
    da, db = ad.seed_blocks(qa, qb)
    fa, fb = element_forces(da, db, mesh.lengths, mesh.params, mesh.quad_order)
    Ke = np.concatenate([fa.eps, fb.eps], axis=1)  # (n_el, 30, 30)
    return _local_matrix_to_sparse(mesh, Ke, size)


def assemble_viscous_forces(mesh: BeamMesh, q, qdot, size: int | None = None) -> np.ndarray:
    size = len(q) if size is None else size
    qa, qb = _gather(mesh, q)
    va, vb = _gather(mesh, qdot)
    fa, fb = element_viscous_forces(qa, qb, va, vb, mesh.lengths, mesh.eta, mesh.quad_order)
    return _scatter(mesh, fa, fb, size)


def assemble_viscous_jacobians(mesh: BeamMesh, q, qdot, size: int | None = None):
    """Return ``(f_v, df_v/dq, df_v/dqdot)`` with sparse Jacobians."""
    size = len(q) if size is None else size
    qa, qb = _gather(mesh, q)
    va, vb = _gather(mesh, qdot)
    da, db, dva, dvb = ad.seed_blocks(qa, qb, va, vb)
    fa, fb = element_viscous_forces(da, db, dva, dvb, mesh.lengths, mesh.eta, mesh.quad_order)
    f = _scatter(mesh, fa.val, fb.val, size)
    eps = np.concatenate([fa.eps, fb.eps], axis=1)  # (n_el, 30, 60)
    Kq = _local_matrix_to_sparse(mesh, eps[:, :, :30], size)
    Kv = _local_matrix_to_sparse(mesh, eps[:, :, 30:], size)
    return f, Kq, Kv


def assemble_mass(mesh: BeamMesh, size: int):
    """Consistent mass matrix; electric rows and the d3 rows stay empty."""
    rows, cols, vals = [], [], []
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for e in range(mesh.n_elements):
        L = mesh.lengths[e]
        mm = mesh.masses[e]
        for block, coef in ((slice(0, 3), mm.A_rho), (slice(3, 6), mm.M1_rho), (slice(6, 9), mm.M2_rho)):
            for a in range(2):
                for b in range(2):
                    ra = mesh.elem_dofs[e, a, block]
                    cb = mesh.elem_dofs[e, b, block]
                    rows.extend(ra)
                    cols.extend(cb)
                    vals.extend([coef * L * base[a, b]] * 3)
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


# ---------------------------------------------------------------------------
# nodal constraints and null space
# ---------------------------------------------------------------------------

def director_constraints(node):
    """The six entries of ``d_i . d_j - delta_ij`` (order 11,12,13,22,23,33).

    ``node`` is a (..., >=12) array or Dual in node layout.
    """
    d = [node[..., 3:6], node[..., 6:9], node[..., 9:12]]
    return ad.stack([ad.dot(d[i], d[j]) - (1.0 if i == j else 0.0) for i, j in CONSTRAINT_PAIRS])


def internal_constraints(node) -> np.ndarray:
    if isinstance(node, NodeState):
        node = node.to_vector()
    return director_constraints(np.asarray(node, dtype=float))


def director_constraint_gradient(node) -> np.ndarray:
    """(6, 12) Jacobian of :func:`director_constraints` w.r.t. the mechanical block."""
    node = np.asarray(node, dtype=float)
    d = [node[3:6], node[6:9], node[9:12]]
    Gm = np.zeros((6, 12))
    for r, (i, j) in enumerate(CONSTRAINT_PAIRS):
        Gm[r, 3 + 3 * i: 6 + 3 * i] += d[j]
        Gm[r, 3 + 3 * j: 6 + 3 * j] += d[i]
    return Gm


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def internal_null_space(node, electric: bool = True, tol: float | None = 1e-6) -> np.ndarray:
    """Null-space block for one node: 15x9 for beam nodes, 12x6 for rigid bodies.

    Columns are translations, infinitesimal rotations (``-hat(d_i)`` on the
    director rows) and, for beam nodes, the electric coordinates.  With
    ``tol=None`` the orthonormality check is skipped, which optimizers need
    at infeasible iterates.
    """
    if isinstance(node, NodeState):
        node = node.to_vector()
    node = np.asarray(node, dtype=float)
    D = node[3:12].reshape(3, 3)
    err = np.max(np.abs(D @ D.T - np.eye(3)))
    if tol is not None and err > tol:
        raise ConstraintViolationError(f"directors not orthonormal (error {err:.3e})")
    n_rows, n_cols = (15, 9) if electric else (12, 6)
    P = np.zeros((n_rows, n_cols))
    P[0:3, 0:3] = np.eye(3)
    for i in range(3):
        P[3 + 3 * i: 6 + 3 * i, 3:6] = -skew(D[i])
    if electric:
        P[12:15, 6:9] = np.eye(3)
    return P
