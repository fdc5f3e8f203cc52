"""Regularized fluid / poroelastic / plate interaction: finite elements, splitting
scheme, energy ledger, degeneracy monitors and the delta-consistency experiment."""
from .assembly import Discretization, PhysicalParams
from .errors import (ConfigError, CouplingError, DegeneracyError, DomainError, FPSIError,
                     MeshIncompatibilityError, PropertyViolation)
from .scheme import Simulation, Thresholds, initial_data

__all__ = [
    "ConfigError", "CouplingError", "DegeneracyError", "Discretization", "DomainError", "FPSIError",
    "MeshIncompatibilityError", "PhysicalParams", "PropertyViolation", "Simulation", "Thresholds",
    "initial_data",
]
__version__ = "0.1.0"
