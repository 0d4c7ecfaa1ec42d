"""Deterministic simulator of a three-phase grid-connected PV inverter
riding through voltage sags.

Typical use::

    from pvsagsim import load_scenario, run_scenario

    result = run_scenario(load_scenario("scenarios/sag_1ph_50pct.ini"))
    result.write_csv("run.csv")
    result.write_metrics("run_metrics.txt")
"""

from .engine import CONTROL_DIVISOR, T_CONTROL, T_FAST, SimResult, run_scenario
from .errors import (
    NumericalBlowup,
    ScenarioError,
    SequenceSingularity,
    SimulationError,
    WindowTooShort,
)
from .metrics import SERIES_COLUMNS, MetricsReport, compute_metrics
from .scenario import ControlConfig, Scenario, load_scenario, with_overrides

__version__ = "0.1.0"

__all__ = [
    "CONTROL_DIVISOR",
    "ControlConfig",
    "MetricsReport",
    "NumericalBlowup",
    "SERIES_COLUMNS",
    "Scenario",
    "ScenarioError",
    "SequenceSingularity",
    "SimResult",
    "SimulationError",
    "T_CONTROL",
    "T_FAST",
    "WindowTooShort",
    "compute_metrics",
    "load_scenario",
    "run_scenario",
    "with_overrides",
    "__version__",
]
