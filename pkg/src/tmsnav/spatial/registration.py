"""Paired-point rigid registration (SVD of the cross-covariance, no scale)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .transform import RigidTransform, apply, nearest_rotation
from .validation import check_paired_points, check_points


class RegistrationError(ValueError):
    pass


class InsufficientFiducialsError(RegistrationError):
    pass


class DegenerateConfigurationError(RegistrationError):
    pass


class PairingError(RegistrationError):
    pass


@dataclass
class FiducialSet:
    """Labelled points (mm) expressed in ``frame_id``."""

    frame_id: str
    points: List[Tuple[str, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.points = [(str(label), np.asarray(p, dtype=float).reshape(3)) for label, p in self.points]
        labels = self.labels
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ValueError(f"duplicate fiducial labels: {dupes}")

    @classmethod
    def from_mapping(cls, frame_id: str, mapping: Dict[str, Sequence[float]]) -> "FiducialSet":
        return cls(frame_id, list(mapping.items()))

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.points]

    def as_array(self, labels=None) -> np.ndarray:
        if labels is None:
            return np.array([p for _, p in self.points]).reshape(-1, 3)
        lookup = dict(self.points)
        return np.array([lookup[l] for l in labels]).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


@dataclass
class RegistrationResult:
    transform: RigidTransform
    fre_rms: float
    per_point_residuals: List[float]
    labels: List[str] = field(default_factory=list)


def _kabsch(moving: np.ndarray, fixed: np.ndarray, degeneracy_tol: float):
    n = moving.shape[0]
    if n < 3:
        raise InsufficientFiducialsError(f"registration needs >= 3 fiducials, got {n}")
    cm = moving.mean(axis=0)
    cf = fixed.mean(axis=0)
    a = moving - cm
    b = fixed - cf
    for what, pts in (("moving", a), ("fixed", b)):
        s = np.linalg.svd(pts, compute_uv=False)
        if s[0] == 0.0 or s[1] < degeneracy_tol * s[0]:
            raise DegenerateConfigurationError(
                f"{what} fiducials are collinear or coincident (singular values {s})")
    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # re-project onto SO(3) to strip rounding before the quaternion conversion
    r = nearest_rotation(r)
    t = cf - r @ cm
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return RigidTransform.from_matrix(m)


class PairedPointRegistration(TransformerMixin, BaseEstimator):
    """Least-squares rigid fit of ``moving`` points onto ``fixed`` points.

    Parameters
    ----------
    degeneracy_tol : float
        A point set whose second singular value (after centring) falls
        below ``degeneracy_tol`` times the first is rejected as collinear.

    Attributes
    ----------
    transform_ : RigidTransform
        Maps moving-frame coordinates into the fixed frame.
    residuals_ : ndarray of shape (n,)
        Per-point distance after registration, mm.
    fre_rms_ : float
        Root mean square of ``residuals_``.
    """

    def __init__(self, degeneracy_tol: float = 1e-9):
        self.degeneracy_tol = degeneracy_tol

    def fit(self, X, y):
        X, y = check_paired_points(X, y)
        self.transform_ = _kabsch(X, y, self.degeneracy_tol)
        self.residuals_ = np.linalg.norm(apply(self.transform_, X) - y, axis=1)
        self.fre_rms_ = float(np.sqrt(np.mean(self.residuals_ ** 2)))
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return apply(self.transform_, check_points(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        return apply(self.transform_.inverse(), check_points(X))

    def score(self, X, y):
        """Negative RMS distance between transformed ``X`` and ``y``."""
        X, y = check_paired_points(X, y)
        return -float(np.sqrt(np.mean(np.sum((self.transform(X) - y) ** 2, axis=1))))


def register_paired_points(moving: FiducialSet, fixed: FiducialSet,
                           degeneracy_tol: float = 1e-9) -> RegistrationResult:
    """Rigid transform taking ``moving.frame_id`` coordinates into ``fixed.frame_id``."""
    if set(moving.labels) != set(fixed.labels):
        missing = sorted(set(moving.labels) ^ set(fixed.labels))
        raise PairingError(f"fiducial labels do not pair up: {missing}")
    labels = moving.labels
    if len(labels) < 3:
        raise InsufficientFiducialsError(f"registration needs >= 3 fiducials, got {len(labels)}")
    est = PairedPointRegistration(degeneracy_tol=degeneracy_tol)
    est.fit(moving.as_array(labels), fixed.as_array(labels))
    return RegistrationResult(
        transform=est.transform_,
        fre_rms=est.fre_rms_,
        per_point_residuals=[float(r) for r in est.residuals_],
        labels=list(labels),
    )


def registration_objective(transform: RigidTransform, moving, fixed) -> float:
    """Sum of squared distances after mapping ``moving`` by ``transform``."""
    diff = apply(transform, np.asarray(moving, dtype=float)) - np.asarray(fixed, dtype=float)
    return float(np.sum(diff * diff))


def target_registration_error(result: RegistrationResult, truth: RigidTransform,
                              target) -> float:
    """Distance (mm) between where the estimate and the truth send ``target``."""
    target = np.asarray(target, dtype=float)
    return float(np.linalg.norm(apply(result.transform, target) - apply(truth, target)))
