"""Phase machine and pipeline nodes of the navigation server."""
from .engine import DEFAULT_EPOCH, NavigationTelemetry, WorkflowEngine
from .loop import EngineLoop
from .phases import (
    AcquisitionError,
    CalibrationFailed,
    CalibrationState,
    DuplicateFiducialError,
    NavigationFailed,
    Phase,
    PhaseError,
    RegistrationFailed,
    RegistrationState,
    TargetSpec,
    UnknownCommandError,
    WorkflowError,
    is_legal,
)

__all__ = [
    "AcquisitionError", "CalibrationFailed", "CalibrationState", "DEFAULT_EPOCH",
    "DuplicateFiducialError", "EngineLoop", "NavigationFailed", "NavigationTelemetry",
    "Phase", "PhaseError", "RegistrationFailed", "RegistrationState", "TargetSpec",
    "UnknownCommandError", "WorkflowEngine", "WorkflowError", "is_legal",
]
