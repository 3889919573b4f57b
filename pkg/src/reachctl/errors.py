"""Exception types shared across the toolkit."""


class ReachCtlError(Exception):
    pass


class NumericalBlowup(ReachCtlError):
    """Simulated state left the finite / bounded region."""


class DimensionMismatch(ReachCtlError, ValueError):
    pass


class EmptyWorkspace(ReachCtlError):
    """Obstacles and clearance exclude every reachable tip point."""


class DivergenceDetected(ReachCtlError):
    """A training loss became non-finite."""


class ConfigError(ReachCtlError, ValueError):
    pass
