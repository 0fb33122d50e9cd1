"""Pointwise kinematics, strain measures and reduced free energy of the
electromechanically coupled Cosserat beam.

Units are g-mm-ms-V throughout, so forces come out in N, stresses in MPa and
energies in N*mm.

Strain components are objective and are always expressed in the director
frame: ``Gamma`` (shear/elongation), ``K`` (bending/torsion), ``Xi`` and
``Theta`` (strain-like electric variables).  The vectorized kernels at the
bottom of this module (``strain_kernel``, ``energy_kernel``,
``resultant_kernel``) work on arrays with arbitrary leading batch axes and on
:class:`deaoc.ad.Dual` inputs alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ad


class ConstraintViolationError(ValueError):
    """Raised when a director triad is not orthonormal within tolerance."""


@dataclass(frozen=True)
class Material:
    rho: float  # g/mm^3
    E: float  # MPa
    G: float  # MPa
    c1: float  # N/V^2
    c2: float  # N/V^2
    eta: float = 0.0  # Kelvin-Voigt damping, D5 = D6 = eta * I

    def __post_init__(self):
        if not (self.E > 0 and self.G > 0 and self.rho > 0):
            raise ValueError("material requires E > 0, G > 0, rho > 0")
        if self.c1 < 0 or self.c2 < 0 or self.eta < 0:
            raise ValueError("material requires c1, c2, eta >= 0")

    def with_eta(self, eta: float) -> "Material":
        return Material(self.rho, self.E, self.G, self.c1, self.c2, eta)


# dielectric elastomer parameters used in all examples
TABLE1 = Material(rho=0.1, E=654.9, G=233.0, c1=5e-8, c2=1e-3, eta=500.0)


@dataclass(frozen=True)
class CrossSection:
    """Doubly symmetric cross-section; first moments and the product moment vanish.

    ``I1`` and ``I2`` are the second moments of area of the ``X1`` and ``X2``
    coordinates; bending about ``d1`` therefore involves ``I2``.
    """

    A: float
    I1: float
    I2: float
    b: float | None = None

    def __post_init__(self):
        if not (self.A > 0 and self.I1 > 0 and self.I2 > 0):
            raise ValueError("cross-section requires A, I1, I2 > 0")

    @property
    def J(self) -> float:
        return self.I1 + self.I2

    @classmethod
    def square(cls, b: float) -> "CrossSection":
        return cls(A=b * b, I1=b**4 / 12.0, I2=b**4 / 12.0, b=b)

    @classmethod
    def rectangle(cls, b1: float, b2: float) -> "CrossSection":
        """``b1`` is the extent along d1, ``b2`` along d2."""
        return cls(A=b1 * b2, I1=b2 * b1**3 / 12.0, I2=b1 * b2**3 / 12.0)


@dataclass
class NodeState:
    centroid: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    phi_o: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0

    @classmethod
    def from_vector(cls, v) -> "NodeState":
        v = np.asarray(v, dtype=float)
        return cls(v[0:3].copy(), v[3:6].copy(), v[6:9].copy(), v[9:12].copy(), v[12], v[13], v[14])

    @classmethod
    def reference(cls, centroid=(0.0, 0.0, 0.0), triad=None) -> "NodeState":
        triad = np.eye(3) if triad is None else np.asarray(triad, dtype=float)
        return cls(np.asarray(centroid, dtype=float), triad[0].copy(), triad[1].copy(), triad[2].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.centroid, self.d1, self.d2, self.d3, [self.phi_o, self.alpha, self.beta]]
        )

    @property
    def triad(self) -> np.ndarray:
        return np.stack([self.d1, self.d2, self.d3])

    def orthonormality_error(self) -> float:
        D = self.triad
        return float(np.max(np.abs(D @ D.T - np.eye(3))))

    def is_constraint_consistent(self, tol: float = 1e-9) -> bool:
        return self.orthonormality_error() <= tol


@dataclass
class StrainState:
    Gamma: np.ndarray
    K: np.ndarray
    Xi: np.ndarray
    Theta: np.ndarray

    @classmethod
    def zero(cls) -> "StrainState":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v) -> "StrainState":
        v = np.asarray(v, dtype=float)
        return cls(v[0:3].copy(), v[3:6].copy(), v[6:9].copy(), v[9:12].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.Gamma, self.K, self.Xi, self.Theta])


@dataclass
class BeamResultants:
    n_Gamma: np.ndarray  # N
    m_K: np.ndarray  # N*mm
    e_Xi: np.ndarray
    e_Theta: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.n_Gamma, self.m_K, self.e_Xi, self.e_Theta])


# ---------------------------------------------------------------------------
# vectorized kernels
# ---------------------------------------------------------------------------
#
# A node/interpolated state is a (..., 15) array laid out as
# [centroid(3), d1(3), d2(3), d3(3), phi_o, alpha, beta].

def strain_kernel(x, xs):
    """Strains from an interpolated state ``x`` and its arc-length derivative ``xs``.

    Returns ``(Gamma, K, Xi, Theta)``, each of shape (..., 3).
    """
    phi_s = xs[..., 0:3]
    d1, d2, d3 = x[..., 3:6], x[..., 6:9], x[..., 9:12]
    d1s, d2s, d3s = xs[..., 3:6], xs[..., 6:9], xs[..., 9:12]
    gamma = ad.stack([ad.dot(phi_s, d1), ad.dot(phi_s, d2), ad.dot(phi_s, d3) - 1.0])
    kappa = ad.stack(
        [
            0.5 * (ad.dot(d2s, d3) - ad.dot(d3s, d2)),
            0.5 * (ad.dot(d3s, d1) - ad.dot(d1s, d3)),
            0.5 * (ad.dot(d1s, d2) - ad.dot(d2s, d1)),
        ]
    )
    xi = ad.stack([-x[..., 13], -x[..., 14], -xs[..., 12]])
    theta = ad.stack([-xs[..., 13], -xs[..., 14], 0.0 * xs[..., 14]])
    return gamma, kappa, xi, theta


def _params(section, material):
    return (
        section.A, section.I1, section.I2, section.J,
        material.E, material.G, material.c1, material.c2,
    )


def energy_kernel(gamma, kappa, xi, theta, params):
    """Beam free energy density per unit reference arc-length.

    ``params`` is the tuple ``(A, I1, I2, J, E, G, c1, c2)``; entries may be
    arrays broadcasting against the leading axes of the strains.
    """
    A, I1, I2, J, E, G, c1, c2 = params
    G1, G2, G3 = gamma[..., 0], gamma[..., 1], gamma[..., 2]
    K1, K2, K3 = kappa[..., 0], kappa[..., 1], kappa[..., 2]
    X1, X2, X3 = xi[..., 0], xi[..., 1], xi[..., 2]
    T1, T2 = theta[..., 0], theta[..., 1]
    mech = 0.5 * (G * A * (G1 * G1 + G2 * G2) + E * A * G3 * G3) + 0.5 * (
        E * I2 * K1 * K1 + E * I1 * K2 * K2 + G * J * K3 * K3
    )
    elec = (c1 + c2) * (A * (X1 * X1 + X2 * X2 + X3 * X3) + I1 * T1 * T1 + I2 * T2 * T2)
    coupled = (
        2.0 * c2 * (A * (X1 * X3 * G1 + X2 * X3 * G2 + X3 * X3 * G3) + G3 * (T1 * T1 * I1 + T2 * T2 * I2))
        + 2.0 * c2 * K3 * (X2 * T1 * I1 - X1 * T2 * I2)
        + 4.0 * c2 * X3 * (T2 * K1 * I2 - T1 * K2 * I1)
    )
    return mech + elec + coupled


def resultant_kernel(gamma, kappa, xi, theta, params):
    """Partial derivatives of :func:`energy_kernel` w.r.t. each strain measure."""
    A, I1, I2, J, E, G, c1, c2 = params
    G1, G2, G3 = gamma[..., 0], gamma[..., 1], gamma[..., 2]
    K1, K2, K3 = kappa[..., 0], kappa[..., 1], kappa[..., 2]
    X1, X2, X3 = xi[..., 0], xi[..., 1], xi[..., 2]
    T1, T2 = theta[..., 0], theta[..., 1]
    c = c1 + c2
    n = ad.stack(
        [
            G * A * G1 + 2.0 * c2 * A * X1 * X3,
            G * A * G2 + 2.0 * c2 * A * X2 * X3,
            E * A * G3 + 2.0 * c2 * (A * X3 * X3 + I1 * T1 * T1 + I2 * T2 * T2),
        ]
    )
    m = ad.stack(
        [
            E * I2 * K1 + 4.0 * c2 * X3 * T2 * I2,
            E * I1 * K2 - 4.0 * c2 * X3 * T1 * I1,
            G * J * K3 + 2.0 * c2 * (X2 * T1 * I1 - X1 * T2 * I2),
        ]
    )
    e = ad.stack(
        [
            2.0 * c * A * X1 + 2.0 * c2 * A * X3 * G1 - 2.0 * c2 * K3 * T2 * I2,
            2.0 * c * A * X2 + 2.0 * c2 * A * X3 * G2 + 2.0 * c2 * K3 * T1 * I1,
            2.0 * c * A * X3
            + 2.0 * c2 * A * (X1 * G1 + X2 * G2 + 2.0 * X3 * G3)
            + 4.0 * c2 * (T2 * K1 * I2 - T1 * K2 * I1),
        ]
    )
    t = ad.stack(
        [
            2.0 * c * I1 * T1 + 4.0 * c2 * G3 * T1 * I1 + 2.0 * c2 * K3 * X2 * I1 - 4.0 * c2 * X3 * K2 * I1,
            2.0 * c * I2 * T2 + 4.0 * c2 * G3 * T2 * I2 - 2.0 * c2 * K3 * X1 * I2 + 4.0 * c2 * X3 * K1 * I2,
            0.0 * T1,
        ]
    )
    return n, m, e, t


# ---------------------------------------------------------------------------
# public pointwise API
# ---------------------------------------------------------------------------

def _check_triad(state: NodeState, tol: float, what: str):
    err = state.orthonormality_error()
    if err > tol:
        raise ConstraintViolationError(f"{what} directors not orthonormal (error {err:.3e} > {tol:g})")


def compute_strains(state: NodeState, state_s: NodeState, reference: NodeState | None = None,
                    tol: float = 1e-6) -> StrainState:
    """Objective strain and strain-like electric measures at one point.

    ``state_s`` holds the arc-length derivatives of every field of ``state``.
    The reference configuration is straight, so the measures vanish for the
    reference state itself; ``reference`` is only validated.
    """
    _check_triad(state, tol, "current")
    if reference is not None:
        _check_triad(reference, tol, "reference")
    g, k, x, t = strain_kernel(state.to_vector(), state_s.to_vector())
    return StrainState(g, k, x, t)


def free_energy_density(strain: StrainState, section: CrossSection, material: Material) -> float:
    return float(
        energy_kernel(strain.Gamma, strain.K, strain.Xi, strain.Theta, _params(section, material))
    )


def resultants(strain: StrainState, section: CrossSection, material: Material) -> BeamResultants:
    n, m, e, t = resultant_kernel(strain.Gamma, strain.K, strain.Xi, strain.Theta, _params(section, material))
    return BeamResultants(n, m, e, t)


def viscous_stress(strain_rate: StrainState, material: Material):
    """Kelvin-Voigt stresses ``(M_v, N_v) = (eta*Gamma_dot, eta*K_dot)``.

    Only the mechanical rates of ``strain_rate`` are used.
    """
    return material.eta * np.asarray(strain_rate.Gamma, float), material.eta * np.asarray(strain_rate.K, float)
