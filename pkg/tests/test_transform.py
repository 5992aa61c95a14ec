import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from oracles import rpy_matrix
from tmsnav.spatial.transform import (
    RigidTransform,
    apply,
    compose,
    compose_all,
    interpolate_pose,
    invert,
    matrix_to_quat,
    nearest_rotation,
    quat_to_matrix,
    rotation_distance,
    translation_distance,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def transforms(draw):
    q = [draw(st.floats(-1, 1)) for _ in range(4)]
    if np.linalg.norm(q) < 1e-3:
        q = [1.0, 0.0, 0.0, 0.0]
    return RigidTransform(q, [draw(finite) for _ in range(3)])


def close(a, b, tol=1e-9):
    return np.allclose(a.as_matrix(), b.as_matrix(), atol=tol, rtol=0)


@given(transforms(), transforms(), transforms())
def test_composition_is_associative(a, b, c):
    assert close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-8)


@given(transforms())
def test_inverse_composes_to_identity(a):
    assert close(compose(a, invert(a)), RigidTransform.identity(), 1e-9)
    assert close(a @ a.inverse(), RigidTransform.identity(), 1e-9)


@given(transforms(), transforms())
def test_compose_matches_matrix_product(a, b):
    np.testing.assert_allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(),
                               atol=1e-9)


@given(transforms())
def test_matrix_round_trip(a):
    assert close(RigidTransform.from_matrix(a.as_matrix()), a, 1e-12)


@given(transforms())
def test_quaternion_is_canonical(a):
    q = a.rotation
    assert abs(np.linalg.norm(q) - 1.0) < 1e-12
    assert q[0] >= 0


def test_negated_quaternion_is_the_same_rotation():
    q = np.array([0.3, -0.5, 0.1, 0.8])
    assert RigidTransform(q) == RigidTransform(-q)


@given(angles, st.floats(-1.5, 1.5), angles)
def test_rpy_matches_scipy_extrinsic_xyz(r, p, y):
    np.testing.assert_allclose(RigidTransform.from_rpy(r, p, y).as_rotation_matrix(),
                               rpy_matrix(r, p, y), atol=1e-12)


@given(st.lists(finite, min_size=3, max_size=3))
def test_rotvec_matches_scipy(v):
    v = np.asarray(v) / 1e3 * 3.0
    np.testing.assert_allclose(RigidTransform.from_rotvec(v).as_rotation_matrix(),
                               Rotation.from_rotvec(v).as_matrix(), atol=1e-12)


def test_rotvec_round_trip_near_pi():
    v = np.array([0.0, math.pi - 1e-9, 0.0])
    np.testing.assert_allclose(RigidTransform.from_rotvec(v).as_rotvec(), v, atol=1e-8)


def test_apply_single_point_and_batch():
    t = RigidTransform.from_rpy(0, 0, math.pi / 2, (1, 2, 3))
    np.testing.assert_allclose(apply(t, [1, 0, 0]), [1, 3, 3], atol=1e-15)
    pts = np.array([[1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(apply(t, pts), [[1, 3, 3], [0, 2, 3]], atol=1e-15)
    np.testing.assert_allclose(t @ pts, apply(t, pts))


def test_apply_rejects_bad_shapes():
    with pytest.raises(ValueError):
        apply(RigidTransform.identity(), [1, 2])


def test_identity_is_neutral():
    a = RigidTransform.from_rpy(0.1, 0.2, 0.3, (4, 5, 6))
    assert compose(a, RigidTransform.identity()) == a
    assert compose_all([]) == RigidTransform.identity()


def test_from_matrix_orthonormalize():
    r = quat_to_matrix(RigidTransform.from_rpy(0.3, -0.2, 1.0).rotation)
    noisy = r + 1e-4 * np.random.default_rng(1).normal(size=(3, 3))
    m = np.eye(4)
    m[:3, :3] = noisy
    t = RigidTransform.from_matrix(m, orthonormalize=True)
    rr = t.as_rotation_matrix()
    np.testing.assert_allclose(rr.T @ rr, np.eye(3), atol=1e-14)
    assert np.linalg.det(rr) > 0


def test_nearest_rotation_fixes_reflection():
    r = nearest_rotation(np.diag([1.0, 1.0, -1.0]))
    assert np.linalg.det(r) > 0


@given(transforms())
def test_matrix_to_quat_inverts_quat_to_matrix(a):
    q = matrix_to_quat(quat_to_matrix(a.rotation))
    assert min(np.abs(q - a.rotation).max(), np.abs(q + a.rotation).max()) < 1e-12


def test_non_finite_translation_rejected():
    with pytest.raises(ValueError):
        RigidTransform((1, 0, 0, 0), (0, math.nan, 0))


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        RigidTransform((0, 0, 0, 0))


def test_rotation_distance_small_angles_are_accurate():
    for angle in (1e-12, 1e-9, 1e-6, 0.5, math.pi - 1e-6):
        a = RigidTransform.from_axis_angle((0, 0, 1), angle)
        assert rotation_distance(RigidTransform.identity(), a) == pytest.approx(angle, rel=1e-9)


def test_translation_distance():
    a = RigidTransform.from_translation((0, 3, 4))
    assert translation_distance(a, RigidTransform.identity()) == 5.0


def test_slerp_endpoints_are_exact():
    a = RigidTransform.from_rpy(0.1, 0.2, 0.3, (1, 2, 3))
    b = RigidTransform.from_rpy(-1.0, 0.5, 2.0, (-4, 5, 6))
    assert interpolate_pose(a, b, 0.0) == a
    assert interpolate_pose(a, b, 1.0) == b


@given(transforms(), transforms(), st.floats(0.0, 1.0))
def test_slerp_splits_angle_proportionally(a, b, s):
    mid = interpolate_pose(a, b, s)
    total = rotation_distance(a, b)
    assert rotation_distance(a, mid) == pytest.approx(s * total, abs=1e-9)
    np.testing.assert_allclose(mid.translation, (1 - s) * a.translation + s * b.translation,
                               atol=1e-9)


def test_slerp_takes_the_shorter_arc():
    a = RigidTransform.from_axis_angle((0, 0, 1), 0.0)
    b = RigidTransform.from_axis_angle((0, 0, 1), 1.9 * math.pi)
    mid = interpolate_pose(a, b, 0.5)
    assert rotation_distance(a, mid) == pytest.approx(0.05 * math.pi, abs=1e-12)


def test_slerp_rejects_out_of_range_fraction():
    with pytest.raises(ValueError):
        interpolate_pose(RigidTransform.identity(), RigidTransform.identity(), 1.5)
