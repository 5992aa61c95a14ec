"""Stylus pivot calibration and robot-base anchoring."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .transform import RigidTransform, compose, invert, rotation_distance
from .validation import check_poses


class CalibrationError(ValueError):
    pass


class InsufficientRotationDiversityError(CalibrationError):
    pass


class InconsistentSamplesError(CalibrationError):
    pass


@dataclass
class PivotResult:
    tip_offset: np.ndarray    # mm, stylus-tag frame
    pivot_point: np.ndarray   # mm, tracker frame
    residual_rms: float       # mm
    condition_number: float = float("nan")


class PivotCalibration(BaseEstimator):
    """Linear pivot calibration.

    For each tag pose ``(R_i, t_i)`` the fixed tip satisfies
    ``R_i @ tip + t_i = pivot``; the stacked system ``[R_i, -I] x = -t_i``
    is solved in the least-squares sense.

    Parameters
    ----------
    max_condition : float
        Reject the pose set when the stacked matrix is worse conditioned
        than this (too little rotation diversity).
    min_poses : int
        Minimum number of poses accepted.
    """

    def __init__(self, max_condition: float = 1e8, min_poses: int = 3):
        self.max_condition = max_condition
        self.min_poses = min_poses

    def fit(self, X, y=None):
        rotations, translations = check_poses(X)
        n = rotations.shape[0]
        if n < self.min_poses:
            raise InsufficientRotationDiversityError(
                f"pivot calibration needs >= {self.min_poses} poses, got {n}")
        a = np.zeros((3 * n, 6))
        a[:, :3] = rotations.reshape(3 * n, 3)
        a[:, 3:] = np.tile(-np.eye(3), (n, 1))
        b = -translations.reshape(3 * n)
        s = np.linalg.svd(a, compute_uv=False)
        cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
        if cond > self.max_condition:
            raise InsufficientRotationDiversityError(
                f"pose set is rank deficient (condition number {cond:.3g})")
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        self.tip_offset_ = x[:3]
        self.pivot_point_ = x[3:]
        tips = np.einsum("nij,j->ni", rotations, self.tip_offset_) + translations
        self.residuals_ = np.linalg.norm(tips - self.pivot_point_, axis=1)
        self.residual_rms_ = float(np.sqrt(np.mean(self.residuals_ ** 2)))
        self.condition_number_ = cond
        return self

    def predict(self, X):
        """Tip positions in the tracker frame for the given tag poses."""
        check_is_fitted(self, "tip_offset_")
        rotations, translations = check_poses(X)
        return np.einsum("nij,j->ni", rotations, self.tip_offset_) + translations

    def result(self) -> PivotResult:
        check_is_fitted(self, "tip_offset_")
        return PivotResult(self.tip_offset_.copy(), self.pivot_point_.copy(),
                           self.residual_rms_, self.condition_number_)


def pivot_calibrate(poses: Iterable[RigidTransform], max_condition: float = 1e8,
                    min_poses: int = 3) -> PivotResult:
    return PivotCalibration(max_condition, min_poses).fit(list(poses)).result()


def average_transforms(transforms: Sequence[RigidTransform]) -> RigidTransform:
    """Mean pose: eigen-average of quaternions, arithmetic mean of translations."""
    if not transforms:
        raise ValueError("nothing to average")
    qs = np.array([t.rotation for t in transforms])
    m = qs.T @ qs
    _, vecs = np.linalg.eigh(m)
    q = vecs[:, -1]
    t = np.mean([t.translation for t in transforms], axis=0)
    return RigidTransform(q, t)


def anchor_base(samples: Sequence[Tuple[RigidTransform, RigidTransform]],
                flange_to_tag: RigidTransform,
                max_translation_spread: float = 10.0,
                max_rotation_spread: float = math.radians(5.0)) -> RigidTransform:
    """Locate the robot base in the tracker frame.

    Each sample pairs the observed tag pose ``W_T_tag`` with the robot's
    reported ``B_T_F`` at the same instant; ``flange_to_tag`` is ``F_T_tag``.
    Returns ``W_T_B``.
    """
    if not samples:
        raise CalibrationError("base anchoring needs at least one sample")
    tag_to_flange = invert(flange_to_tag)
    estimates: List[RigidTransform] = [
        compose(compose(w_t_tag, tag_to_flange), invert(b_t_f)) for w_t_tag, b_t_f in samples
    ]
    if len(estimates) == 1:
        return estimates[0]
    mean = average_transforms(estimates)
    worst_t = max(float(np.linalg.norm(e.translation - mean.translation)) for e in estimates)
    worst_r = max(rotation_distance(e, mean) for e in estimates)
    if worst_t > max_translation_spread or worst_r > max_rotation_spread:
        raise InconsistentSamplesError(
            f"base estimates disagree by up to {worst_t:.3f} mm / "
            f"{math.degrees(worst_r):.3f} deg; check the flange-to-tag transform")
    return mean
