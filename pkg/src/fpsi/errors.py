"""Exception hierarchy shared by all modules."""


class FPSIError(Exception):
    """Base class for package errors."""


class ConfigError(FPSIError):
    """Invalid or inconsistent configuration."""


class MeshIncompatibilityError(FPSIError):
    """Interface nodes of the fluid, Biot and plate meshes do not coincide."""


class DomainError(FPSIError):
    """A point lies outside the domain on which an operation is defined."""


class DegeneracyError(FPSIError):
    """A geometric quantity degenerated (vanishing Jacobian, touching plate)."""


class CouplingError(FPSIError):
    """Interface data are inconsistent (e.g. plate and Biot traces disagree)."""


class PropertyViolation(FPSIError):
    """A checked mathematical property (energy law, cancellation) failed."""
