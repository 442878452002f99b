"""Collision-model charging of a ladder quantum battery by spin ensembles."""
from .closed_form import ClosedFormModel, DriftParameters, drift_parameters, f_of_x
from .collision import CollisionChannel, Trajectory, build_channel, evolve, run_trajectory
from .errors import BatteryError, InvariantViolation, NonCharging, ValidationError, ZeroSteps
from .observables import StepObservables, ergotropy, observe, purity
from .operators import AtomEnsembleSpec, BatterySpec, basis_state, coherent_spin_state

__version__ = "0.1.0"

__all__ = [
    "AtomEnsembleSpec", "BatteryError", "BatterySpec", "ClosedFormModel", "CollisionChannel",
    "DriftParameters", "InvariantViolation", "NonCharging", "StepObservables", "Trajectory",
    "ValidationError", "ZeroSteps", "basis_state", "build_channel", "coherent_spin_state",
    "drift_parameters", "ergotropy", "evolve", "f_of_x", "observe", "purity", "run_trajectory",
]
