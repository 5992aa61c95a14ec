import math

import numpy as np
import pytest
from sklearn.base import clone

from oracles import random_rigid
from tmsnav.spatial.calibration import (
    CalibrationError,
    InconsistentSamplesError,
    InsufficientRotationDiversityError,
    PivotCalibration,
    anchor_base,
    average_transforms,
    pivot_calibrate,
)
from tmsnav.spatial.transform import (
    RigidTransform,
    apply,
    compose,
    invert,
    rotation_distance,
    translation_distance,
)


def pivot_poses(tip, pivot, rotations):
    """Tag poses that all put ``tip`` on ``pivot``."""
    return [RigidTransform(r.rotation, np.asarray(pivot) - apply(r, tip)) for r in rotations]


def spread_rotations(rng, n, cone=0.6):
    out = []
    for _ in range(n):
        axis = rng.normal(size=3)
        out.append(RigidTransform.from_axis_angle(axis, rng.uniform(0.05, cone)))
    return out


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_recovery(seed):
    rng = np.random.default_rng(seed)
    tip = rng.uniform(-150, 150, 3)
    pivot = rng.uniform(-300, 300, 3)
    result = pivot_calibrate(pivot_poses(tip, pivot, spread_rotations(rng, 30)))
    np.testing.assert_allclose(result.tip_offset, tip, atol=1e-9)
    np.testing.assert_allclose(result.pivot_point, pivot, atol=1e-9)
    assert result.residual_rms < 1e-9


def test_three_poses_suffice():
    rng = np.random.default_rng(1)
    tip, pivot = np.array([0, 0, -100.0]), np.array([10, 20, 30.0])
    rots = [RigidTransform.from_axis_angle(a, 0.5) for a in ((1, 0, 0), (0, 1, 0), (1, 1, 0))]
    result = pivot_calibrate(pivot_poses(tip, pivot, rots))
    np.testing.assert_allclose(result.tip_offset, tip, atol=1e-9)


def test_two_poses_rejected():
    rots = [RigidTransform.identity(), RigidTransform.from_axis_angle((1, 0, 0), 0.5)]
    with pytest.raises(InsufficientRotationDiversityError):
        pivot_calibrate(pivot_poses((0, 0, -100), (0, 0, 0), rots))


def test_identical_rotations_rejected():
    r = RigidTransform.from_rpy(0.1, 0.2, 0.3)
    with pytest.raises(InsufficientRotationDiversityError):
        pivot_calibrate(pivot_poses((0, 0, -100), (0, 0, 0), [r] * 10))


def test_single_axis_rotations_rejected():
    rots = [RigidTransform.from_axis_angle((0, 0, 1), a) for a in np.linspace(0, 2, 20)]
    with pytest.raises(InsufficientRotationDiversityError):
        pivot_calibrate(pivot_poses((0, 5, -100), (1, 2, 3), rots))


def test_noisy_residual_reflects_noise():
    rng = np.random.default_rng(7)
    poses = pivot_poses((0, 0, -120), (5, 5, 5), spread_rotations(rng, 200))
    noisy = [RigidTransform(p.rotation, p.translation + rng.normal(0, 0.2, 3)) for p in poses]
    result = pivot_calibrate(noisy)
    # per-pose residual norm of isotropic 0.2 mm noise is ~ 0.2 * sqrt(3) (less the fitted dofs)
    assert 0.2 < result.residual_rms < 0.2 * math.sqrt(3) * 1.1
    assert np.linalg.norm(result.tip_offset - (0, 0, -120)) < 1.0


def test_estimator_interface():
    rng = np.random.default_rng(2)
    tip, pivot = np.array([1.0, 2.0, -90.0]), np.array([0.0, 0.0, 50.0])
    poses = pivot_poses(tip, pivot, spread_rotations(rng, 10))
    est = clone(PivotCalibration(max_condition=1e6)).fit(poses)
    np.testing.assert_allclose(est.predict(poses), np.tile(pivot, (10, 1)), atol=1e-9)
    assert est.result().condition_number < 1e6


def test_average_transforms_of_identical_poses():
    a = RigidTransform.from_rpy(0.3, 0.2, -0.1, (1, 2, 3))
    mean = average_transforms([a, a, a])
    assert rotation_distance(mean, a) < 1e-12
    np.testing.assert_allclose(mean.translation, a.translation)


def test_average_ignores_quaternion_sign():
    a = RigidTransform.from_axis_angle((0, 0, 1), math.pi - 0.01)
    b = RigidTransform.from_axis_angle((0, 0, 1), -math.pi + 0.01)
    mean = average_transforms([a, b])
    assert rotation_distance(mean, RigidTransform.from_axis_angle((0, 0, 1), math.pi)) < 1e-9


def _anchor_samples(rng, w_t_b, f_t_tag, n=10):
    out = []
    for _ in range(n):
        b_t_f = RigidTransform.from_matrix(random_rigid(rng, 300))
        out.append((compose(compose(w_t_b, b_t_f), f_t_tag), b_t_f))
    return out


def test_anchor_recovers_base():
    rng = np.random.default_rng(5)
    w_t_b = RigidTransform.from_matrix(random_rigid(rng, 500))
    f_t_tag = RigidTransform.from_rpy(0, 0, 0.3, (0, 60, 40))
    est = anchor_base(_anchor_samples(rng, w_t_b, f_t_tag), f_t_tag)
    assert translation_distance(est, w_t_b) < 1e-9
    assert rotation_distance(est, w_t_b) < 1e-12


def test_anchor_detects_wrong_flange_to_tag():
    rng = np.random.default_rng(6)
    w_t_b = RigidTransform.from_matrix(random_rigid(rng, 500))
    f_t_tag = RigidTransform.from_translation((0, 60, 40))
    wrong = RigidTransform.from_translation((0, 60, 80))
    with pytest.raises(InconsistentSamplesError):
        anchor_base(_anchor_samples(rng, w_t_b, f_t_tag), wrong)


def test_anchor_needs_samples():
    with pytest.raises(CalibrationError):
        anchor_base([], RigidTransform.identity())
