"""Exception hierarchy."""


class MrwsError(Exception):
    """Base class for all package errors."""


class ConstructionError(MrwsError):
    """A space, domain or problem violates a structural precondition."""


class ConfigError(MrwsError):
    """A scenario configuration or input file is invalid."""


class SolverError(MrwsError):
    """A solve failed structurally (singular system, bracket not found)."""
