"""Rigid transforms as (unit quaternion, translation) pairs.

A transform ``a_T_b`` maps coordinates expressed in frame ``b`` into frame
``a``. Units are millimetres and radians; frames follow RAS.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

ArrayLike = Sequence[float]


def quat_multiply(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"cannot normalize quaternion {q}")
    q = q / n
    # canonical sign: w >= 0 (ties broken on the first nonzero vector part)
    if q[0] < 0 or (q[0] == 0 and _first_nonzero(q[1:]) < 0):
        q = -q
    return q


def _first_nonzero(v):
    for c in v:
        if c != 0:
            return c
    return 0.0


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(r) -> np.ndarray:
    """Quaternion of a rotation matrix (Shepperd's branch selection)."""
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    diag = (tr, r[0, 0], r[1, 1], r[2, 2])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def nearest_rotation(m) -> np.ndarray:
    """Closest proper rotation (Frobenius sense) to a 3x3 matrix."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


class RigidTransform:
    """Immutable rigid transform ``parent_T_child``."""

    __slots__ = ("_q", "_t")

    def __init__(self, rotation: ArrayLike = (1.0, 0.0, 0.0, 0.0),
                 translation: ArrayLike = (0.0, 0.0, 0.0)):
        q = quat_normalize(rotation)
        t = np.array(translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError(f"non-finite translation {t}")
        q.setflags(write=False)
        t.setflags(write=False)
        self._q = q
        self._t = t

    @property
    def rotation(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z), w >= 0."""
        return self._q

    @property
    def translation(self) -> np.ndarray:
        return self._t

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_translation(cls, xyz: ArrayLike) -> "RigidTransform":
        return cls((1.0, 0.0, 0.0, 0.0), xyz)

    @classmethod
    def from_axis_angle(cls, axis: ArrayLike, angle: float,
                        translation: ArrayLike = (0.0, 0.0, 0.0)) -> "RigidTransform":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0:
            return cls((1.0, 0.0, 0.0, 0.0), translation)
        axis = axis / n
        half = 0.5 * angle
        return cls(np.concatenate([[math.cos(half)], math.sin(half) * axis]), translation)

    @classmethod
    def from_rotvec(cls, rotvec: ArrayLike, translation: ArrayLike = (0.0, 0.0, 0.0)):
        rotvec = np.asarray(rotvec, dtype=float)
        return cls.from_axis_angle(rotvec, float(np.linalg.norm(rotvec)), translation)

    @classmethod
    def from_rpy(cls, roll: float, pitch: float, yaw: float,
                 translation: ArrayLike = (0.0, 0.0, 0.0)) -> "RigidTransform":
        """Fixed-axis roll about x, pitch about y, yaw about z: R = Rz @ Ry @ Rx."""
        qx = (math.cos(roll / 2), math.sin(roll / 2), 0.0, 0.0)
        qy = (math.cos(pitch / 2), 0.0, math.sin(pitch / 2), 0.0)
        qz = (math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2))
        return cls(quat_multiply(qz, quat_multiply(qy, qx)), translation)

    @classmethod
    def from_matrix(cls, m, orthonormalize: bool = False) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        r = m[:3, :3]
        if orthonormalize:
            r = nearest_rotation(r)
        return cls(matrix_to_quat(r), m[:3, 3])

    def as_rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self._q)

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = quat_to_matrix(self._q)
        out[:3, 3] = self._t
        return out

    def as_rotvec(self) -> np.ndarray:
        w = min(1.0, self._q[0])
        v = self._q[1:]
        s = np.linalg.norm(v)
        if s < 1e-300:
            return np.zeros(3)
        return 2.0 * math.atan2(s, w) * v / s

    @property
    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        return 2.0 * math.atan2(float(np.linalg.norm(self._q[1:])), float(self._q[0]))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __matmul__(self, other):
        if isinstance(other, RigidTransform):
            return compose(self, other)
        return apply(self, other)

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def apply(self, points) -> np.ndarray:
        return apply(self, points)

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self._q, other._q) and np.array_equal(self._t, other._t))

    def __hash__(self):
        return hash((tuple(self._q), tuple(self._t)))

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self._q)
        t = ", ".join(f"{v:.6g}" for v in self._t)
        return f"RigidTransform(rotation=({q}), translation=({t}))"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a ∘ b``: maps b's child frame into a's parent frame."""
    q = quat_multiply(a.rotation, b.rotation)
    t = quat_to_matrix(a.rotation) @ b.translation + a.translation
    return RigidTransform(q, t)


def compose_all(transforms: Iterable[RigidTransform]) -> RigidTransform:
    out = RigidTransform.identity()
    for t in transforms:
        out = compose(out, t)
    return out


def invert(t: RigidTransform) -> RigidTransform:
    w, x, y, z = t.rotation
    q_inv = np.array([w, -x, -y, -z])
    return RigidTransform(q_inv, -(quat_to_matrix(q_inv) @ t.translation))


def apply(t: RigidTransform, points) -> np.ndarray:
    """``R p + t`` for one point (3,) or a stack of points (n, 3)."""
    p = np.asarray(points, dtype=float)
    r = quat_to_matrix(t.rotation)
    if p.ndim == 1:
        return r @ p + t.translation
    return p @ r.T + t.translation


def rotation_distance(a: RigidTransform, b: RigidTransform) -> float:
    """Angle (rad) of the relative rotation between ``a`` and ``b``."""
    diff = quat_multiply(invert(a).rotation, b.rotation)
    # atan2 keeps precision for tiny angles where acos would not
    return 2.0 * math.atan2(float(np.linalg.norm(diff[1:])), abs(float(diff[0])))


def translation_distance(a: RigidTransform, b: RigidTransform) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


def interpolate_pose(a: RigidTransform, b: RigidTransform, s: float) -> RigidTransform:
    """Linear translation, shortest-arc slerp rotation; exact endpoints."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation fraction {s} outside [0, 1]")
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    qa, qb = a.rotation, b.rotation
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb, dot = -qb, -dot
    t = (1.0 - s) * a.translation + s * b.translation
    theta = math.atan2(float(np.linalg.norm(qb - dot * qa)), dot)
    if theta < 1e-12:
        q = (1.0 - s) * qa + s * qb
    else:
        q = (math.sin((1.0 - s) * theta) * qa + math.sin(s * theta) * qb) / math.sin(theta)
    return RigidTransform(q, t)
