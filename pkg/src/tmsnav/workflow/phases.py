"""Workflow phases, per-phase state and the errors the engine reports."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..igtl.codec import (
    STATUS_CONFIG_ERROR,
    STATUS_NOT_FOUND,
    STATUS_NOT_READY,
    STATUS_UNKNOWN_ERROR,
    STATUS_UNKNOWN_INSTRUCTION,
)
from ..spatial.calibration import PivotResult
from ..spatial.registration import FiducialSet, RegistrationResult
from ..spatial.transform import RigidTransform


class Phase(enum.Enum):
    IDLE = "Idle"
    CALIBRATION = "Calibration"
    REGISTRATION = "Registration"
    NAVIGATION = "Navigation"


FORWARD = {
    Phase.IDLE: Phase.CALIBRATION,
    Phase.CALIBRATION: Phase.REGISTRATION,
    Phase.REGISTRATION: Phase.NAVIGATION,
}


def is_legal(current: Phase, target: Phase) -> bool:
    return target is Phase.IDLE or FORWARD.get(current) is target


class WorkflowError(Exception):
    """Failure reported to clients as a STATUS with ``error_name``."""

    error_name = "ERROR"
    code = STATUS_UNKNOWN_ERROR

    def __init__(self, message: str, error_name: Optional[str] = None, code: Optional[int] = None):
        super().__init__(message)
        if error_name is not None:
            self.error_name = error_name
        if code is not None:
            self.code = code


class PhaseError(WorkflowError):
    error_name = "PHASE"
    code = STATUS_NOT_READY


class UnknownCommandError(WorkflowError):
    error_name = "UNKNOWN_CMD"
    code = STATUS_UNKNOWN_INSTRUCTION


class CalibrationFailed(WorkflowError):
    error_name = "CALIB_FAIL"
    code = STATUS_CONFIG_ERROR


class RegistrationFailed(WorkflowError):
    error_name = "REG_FAIL"
    code = STATUS_CONFIG_ERROR


class NavigationFailed(WorkflowError):
    error_name = "NAV_FAIL"
    code = STATUS_NOT_READY


class DuplicateFiducialError(WorkflowError):
    error_name = "DUP_FIDUCIAL"
    code = STATUS_CONFIG_ERROR


class AcquisitionError(WorkflowError):
    error_name = "ACQ_FAIL"
    code = STATUS_NOT_FOUND


@dataclass
class TargetSpec:
    """Stimulation target I_T_target; the target's -z axis points into the scalp."""

    pose: RigidTransform


@dataclass
class CalibrationState:
    pivot: Optional[PivotResult] = None
    base: Optional[RigidTransform] = None      # W_T_B

    @property
    def complete(self) -> bool:
        return self.pivot is not None and self.base is not None


@dataclass
class RegistrationState:
    collected: Dict[str, np.ndarray] = field(default_factory=dict)   # label -> p_H
    image_fiducials: Optional[FiducialSet] = None
    result: Optional[RegistrationResult] = None

    @property
    def complete(self) -> bool:
        return self.result is not None

    def head_fiducials(self) -> FiducialSet:
        return FiducialSet("head", list(self.collected.items()))
