"""Rigid-transform algebra, registration and calibration."""
from .calibration import (
    CalibrationError,
    InconsistentSamplesError,
    InsufficientRotationDiversityError,
    PivotCalibration,
    PivotResult,
    anchor_base,
    average_transforms,
    pivot_calibrate,
)
from .registration import (
    DegenerateConfigurationError,
    FiducialSet,
    InsufficientFiducialsError,
    PairedPointRegistration,
    PairingError,
    RegistrationError,
    RegistrationResult,
    register_paired_points,
    registration_objective,
    target_registration_error,
)
from .transform import (
    RigidTransform,
    apply,
    compose,
    compose_all,
    interpolate_pose,
    invert,
    rotation_distance,
    translation_distance,
)
