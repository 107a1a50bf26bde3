"""Exception types shared across the package."""


class CombDspError(Exception):
    """Base class for all package errors."""


class ParameterError(CombDspError, ValueError):
    """A parameter is outside its valid range."""


class InputSizeError(CombDspError, ValueError):
    """An input array has an incompatible length or shape."""


class ConfigurationError(CombDspError):
    """A run configuration is inconsistent (e.g. band exceeds the grid)."""


class SyncFailureError(CombDspError):
    """Frame synchronization correlation peak below threshold."""


class EqualizerDivergenceError(CombDspError):
    """Adaptive equalizer output power ran away."""


class LoopDivergenceError(CombDspError):
    """DPLL integrator left its stable range."""


class DegenerateGeometryError(CombDspError):
    """Dual-reference separation attempted with (near-)zero walk-off."""


class UnsupportedOperatingPointError(CombDspError):
    """Achievable code rate is non-positive at the requested operating point."""


class NumericalError(CombDspError):
    """NaN/Inf appeared where finite values are required."""
