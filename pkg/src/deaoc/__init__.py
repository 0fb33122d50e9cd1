"""Simulation and optimal control of dielectric-elastomer-actuated flexible multibody systems."""

from .cosserat import (
    TABLE1,
    BeamResultants,
    ConstraintViolationError,
    CrossSection,
    Material,
    NodeState,
    StrainState,
    compute_strains,
    free_energy_density,
    resultants,
    viscous_stress,
)

__version__ = "0.1.0"
