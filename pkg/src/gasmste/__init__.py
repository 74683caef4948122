"""Multi-robot, multi-source gas source term estimation.

Modules
-------
plume    dispersion model and sensor simulation
belief   hybrid particle filter over variable-size source sets
extract  label-consistent estimates and the stop-criterion uncertainty
wcc      wind-aware coverage control on a lattice
drive    differential-drive kinematics and go-to-point control
gospa    GOSPA evaluation metric
sim      closed-loop missions, static grids, Monte Carlo harness
shell    configuration, log files and the command-line interface
"""
from .plume import Domain, EnvParams, Measurement, SensorModel, SourceTerm, concentration
from .gospa import gospa, localization_gospa

__version__ = "0.1.0"

__all__ = [
    "Domain", "EnvParams", "Measurement", "SensorModel", "SourceTerm", "concentration",
    "gospa", "localization_gospa", "__version__",
]
