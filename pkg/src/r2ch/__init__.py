"""Structure-preserving finite differences for the rotation-two-component Camassa-Holm system."""
from .experiments import CATALOG, get_case, run_convergence_study, simulate
from .grid import GridFn, GridSpec
from .invariants import InvariantSample, energy, mass, momentum
from .model import PhysParams, SolverCfg, State, TimeGrid
from .scheme import StepError, Trajectory, UniquenessWarning, newton_step, picard_step, run

__all__ = [
    "CATALOG", "GridFn", "GridSpec", "InvariantSample", "PhysParams", "SolverCfg", "State",
    "StepError", "TimeGrid", "Trajectory", "UniquenessWarning", "energy", "get_case", "mass",
    "momentum", "newton_step", "picard_step", "run", "run_convergence_study", "simulate",
]
__version__ = "0.1.0"
