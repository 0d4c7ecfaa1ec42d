"""Exception types raised by the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class DegenerateVoltage(SimulationError):
    """Both sequence amplitudes are too small to split power between them."""


class SequenceSingularity(SimulationError):
    """|u+|^2 - |u-|^2 is too small to invert for current references."""


class EnvelopeSingularity(SimulationError):
    """Reference-envelope denominators vanished; geometry is undefined."""


class NumericalBlowup(SimulationError):
    """A plant state left its physical sanity bounds."""


class WindowTooShort(SimulationError):
    """Requested analysis window spans fewer cycles than the metric needs."""


class ScenarioError(SimulationError):
    """Scenario file failed to parse or validate."""
