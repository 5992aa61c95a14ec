"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .transform import RigidTransform


def check_points(X, name="X", min_points=1) -> np.ndarray:
    """Return ``X`` as a finite float array of shape (n, 3)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=0,
                    input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got shape {X.shape}")
    if X.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} points, got {X.shape[0]}")
    return X


def check_paired_points(X, Y):
    X = check_points(X, "moving")
    Y = check_points(Y, "fixed")
    if X.shape != Y.shape:
        raise ValueError(f"point sets differ in shape: {X.shape} vs {Y.shape}")
    return X, Y


def check_poses(poses):
    """Split a pose collection into stacked rotations (n,3,3) and translations (n,3).

    Accepts RigidTransform objects or homogeneous matrices (n, 4, 4).
    """
    if isinstance(poses, np.ndarray) and poses.ndim == 3:
        mats = np.asarray(poses, dtype=float)
        if mats.shape[1:] != (4, 4):
            raise ValueError(f"pose stack must be (n, 4, 4), got {mats.shape}")
    else:
        mats = np.array([
            p.as_matrix() if isinstance(p, RigidTransform) else np.asarray(p, dtype=float)
            for p in poses
        ]).reshape(-1, 4, 4)
    if not np.all(np.isfinite(mats)):
        raise ValueError("poses contain non-finite values")
    return mats[:, :3, :3], mats[:, :3, 3]
