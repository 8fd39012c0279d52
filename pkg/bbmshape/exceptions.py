"""
Custom exception hierarchy for bbmshape
"""


class BBMShapeError(Exception):
    """Base exception for all bbmshape errors"""

    pass


class FieldError(BBMShapeError):
    """Invalid branching-rate environment"""

    pass


class NegativeFieldError(FieldError):
    """Field takes negative values on the verification grid"""

    pass


class ZeroFieldError(FieldError):
    """Field vanishes identically"""

    pass


class SpectralError(BBMShapeError):
    """Base exception for eigenvalue solver errors"""

    pass


class NotPositiveError(SpectralError):
    """Selected eigenfunction changes sign or is not real"""

    pass


class TruncationError(SpectralError):
    """Eigen-equation residual above tolerance for the Fourier truncation"""

    pass


class BoundsError(SpectralError):
    """Principal eigenvalue outside the min/max-g bounds"""

    pass


class ConvexityError(SpectralError):
    """Eigenvalue curve failed the strict convexity check"""

    pass


class SpeedError(BBMShapeError):
    """Base exception for front speed and rate function errors"""

    pass


class BracketError(SpeedError):
    """No unimodal bracket found within the search limits"""

    pass


class TangencyError(SpeedError):
    """Minimizer failed the c* = d(gamma)/d(lambda) postcondition"""

    pass


class SpeedBoundError(SpeedError):
    """Front speed outside its a priori bounds"""

    pass


class NotConvexError(SpeedError):
    """Cumulant samples are not convex"""

    pass


class WulffError(BBMShapeError):
    """Base exception for Wulff shape geometry errors"""

    pass


class DegenerateShapeError(WulffError):
    """Half-space intersection is empty or unbounded"""

    pass


class EmptyConeError(WulffError):
    """No grid direction in the open half-sphere around the query direction"""

    pass


class CoverFailureError(WulffError):
    """Boundary sample point not covered by any candidate half-space"""

    pass


class NetFailureError(WulffError):
    """No net spacing could be certified"""

    pass


class SimulationError(BBMShapeError):
    """Base exception for Monte Carlo errors"""

    pass


class CapThinnedError(SimulationError):
    """Estimator needs unthinned populations but the cap was reached"""

    pass


class TooFewHitsError(SimulationError):
    """Rare event observed too rarely at every time for the given replicas"""

    pass


class FkppError(BBMShapeError):
    """Base exception for F-KPP solver errors"""

    pass


class CflViolationError(FkppError):
    """Time step violates the explicit-scheme stability bound"""

    pass


class DomainTooSmallError(FkppError):
    """Front reached the boundary layer of the computational domain"""

    pass


class NotLinearError(FkppError):
    """Front position is not linear in time over the fit window"""

    pass


class ConfigError(BBMShapeError):
    """Configuration file errors"""

    pass


class ConfigLoadError(ConfigError):
    """Failed to load configuration file"""

    pass


class ConfigSaveError(ConfigError):
    """Failed to save configuration file"""

    pass


class ConfigValidationError(ConfigError):
    """Configuration contains unknown keys or invalid values"""

    pass
