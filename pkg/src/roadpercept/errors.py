"""Exception hierarchy shared across the pipeline."""


class PerceptionError(Exception):
    """Base class for all errors raised by this package."""


class CameraDomainError(PerceptionError, ValueError):
    """Input lies outside a camera model's valid domain (angle/radius too large)."""


class ConvergenceError(PerceptionError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class DegenerateConfigurationError(PerceptionError, ValueError):
    """Point configuration cannot constrain the model (collinear/coincident)."""


class InsufficientPairsError(PerceptionError, ValueError):
    """Too few correspondences for the requested estimation."""


class NoConsensusError(PerceptionError, RuntimeError):
    """RANSAC found no consensus set of at least minimal size."""


class UncoveredPixelError(PerceptionError, LookupError):
    """Pixel has no world-coordinate coverage in the localization masks."""


class OutOfCoverageError(PerceptionError, LookupError):
    """World point projects outside every calibrated segment."""


class NumericalError(PerceptionError, RuntimeError):
    """Numerical failure, e.g. a covariance that lost positive definiteness."""


class TimeRegressionError(PerceptionError, ValueError):
    """Timestamps fed to a sequential consumer went backwards."""


class ScenarioError(PerceptionError, ValueError):
    """Simulation scenario is infeasible or inconsistent."""


class ConfigError(PerceptionError, ValueError):
    """Invalid or inconsistent configuration input."""
