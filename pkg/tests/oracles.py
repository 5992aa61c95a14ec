"""Independent reference computations used as test oracles.

Nothing here calls the code under test except for plain data containers.
"""
import math

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation


def brute_force_registration(moving, fixed, restarts=8, seed=0):
    """Best objective over random-restart nonlinear least squares in (rotvec, t)."""
    moving = np.asarray(moving, dtype=float)
    fixed = np.asarray(fixed, dtype=float)
    rng = np.random.default_rng(seed)

    def residual(x):
        r = Rotation.from_rotvec(x[:3]).as_matrix()
        return (moving @ r.T + x[3:] - fixed).ravel()

    best = None
    for _ in range(restarts):
        rv = Rotation.random(random_state=rng.integers(2 ** 31)).as_rotvec()
        x0 = np.concatenate([rv, fixed.mean(0) - moving.mean(0)])
        sol = least_squares(residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        obj = float(np.sum(sol.fun ** 2))
        if best is None or obj < best[0]:
            best = (obj, sol.x)
    obj, x = best
    m = np.eye(4)
    m[:3, :3] = Rotation.from_rotvec(x[:3]).as_matrix()
    m[:3, 3] = x[3:]
    return obj, m


def random_rigid(rng, scale=200.0):
    m = np.eye(4)
    m[:3, :3] = Rotation.random(random_state=rng.integers(2 ** 31)).as_matrix()
    m[:3, 3] = rng.uniform(-scale, scale, 3)
    return m


def path_compose(parents, locals_, frame):
    """World matrix by walking parent links and multiplying 4x4 matrices."""
    chain = []
    while frame is not None:
        chain.append(locals_[frame])
        frame = parents[frame]
    m = np.eye(4)
    for local in reversed(chain):
        m = m @ local
    return m


def rpy_matrix(roll, pitch, yaw):
    return Rotation.from_euler("xyz", [roll, pitch, yaw]).as_matrix()


def polar_rotation(m):
    """Nearest rotation to a 3x3 matrix (SVD polar factor with det fix)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle(ra, rb):
    """Angle of ra^T rb via scipy's rotation vector."""
    return float(np.linalg.norm(Rotation.from_matrix(ra.T @ rb).as_rotvec()))
