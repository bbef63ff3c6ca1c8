from .base import Base
from .convergence_record import ConvergenceRecord
from .simulation_run import SimulationRun

__all__ = [
    "Base",
    "ConvergenceRecord",
    "SimulationRun",
]
