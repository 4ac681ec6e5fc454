"""Exception types shared across the package."""


class TactiforceError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(TactiforceError, ValueError):
    """An indenter placement or gel geometry constraint is violated."""


class FieldFormatError(TactiforceError, ValueError):
    """A binary field container is malformed or inconsistent."""


class DomainError(TactiforceError, ValueError):
    """A numeric routine was handed an input outside its domain."""


class DegenerateFitError(TactiforceError, ValueError):
    """A regression problem has too few or degenerate samples."""


class CheckpointError(TactiforceError, ValueError):
    """A model checkpoint file is malformed or inconsistent."""


class ConfigError(TactiforceError, ValueError):
    """A configuration file or scenario description is invalid."""


class BusError(TactiforceError, RuntimeError):
    """A telemetry bus protocol violation or transport failure."""


class ReplayError(BusError):
    """A recorded telemetry file cannot be replayed."""
