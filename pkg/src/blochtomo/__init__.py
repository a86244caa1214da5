"""Tomography and purity estimation for qubits under randomly timed X/Y rotations."""

__version__ = "0.1.0"

from .drive import DriveSet, QubitDrive
from .errors import (
    BlochTomoError,
    DegenerateFrequenciesError,
    DegenerateInputError,
    HarmonicOverflowError,
    ProbabilityError,
    SingularParameterError,
    UnreachablePurityError,
    ValidationError,
)
from .purity import estimate_purity
from .sampler import ExperimentPlan, RunLog, run_experiment
from .tomography import reconstruct

__all__ = [
    "__version__",
    "BlochTomoError",
    "DegenerateFrequenciesError",
    "DegenerateInputError",
    "DriveSet",
    "ExperimentPlan",
    "HarmonicOverflowError",
    "ProbabilityError",
    "QubitDrive",
    "RunLog",
    "SingularParameterError",
    "UnreachablePurityError",
    "ValidationError",
    "estimate_purity",
    "reconstruct",
    "run_experiment",
]
