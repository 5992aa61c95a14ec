"""Simulated optical tracker with seeded pose noise."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..spatial.transform import RigidTransform, compose
from .world import SimWorld

DEFAULT_TRACKER_RATE_HZ = 30.0


@dataclass
class NoiseModel:
    """Isotropic translation noise (mm) and axis-angle rotation noise (rad).

    The rotation perturbation has a uniformly random axis and a
    half-normal angle with scale ``sigma_rotation``.
    """

    sigma_translation: float = 0.0
    sigma_rotation: float = 0.0
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma_translation < 0 or self.sigma_rotation < 0:
            raise ValueError("noise sigmas must be non-negative")
        self.rng = np.random.default_rng(self.seed)

    def perturb(self, pose: RigidTransform) -> RigidTransform:
        out = pose
        if self.sigma_rotation > 0:
            axis = self.rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = abs(self.rng.normal(0.0, self.sigma_rotation))
            out = compose(out, RigidTransform.from_axis_angle(axis, angle))
        if self.sigma_translation > 0:
            offset = self.rng.normal(0.0, self.sigma_translation, size=3)
            out = RigidTransform(out.rotation, out.translation + offset)
        return out


def tracker_observe(world: SimWorld, t: float, noise: NoiseModel) -> List[Tuple[str, RigidTransform]]:
    """Visible tag poses W_T_tag at time ``t``, noise applied in tag order."""
    if t < 0:
        raise ValueError("observation time must be >= 0")
    poses = world.tag_poses(t)
    return [(tag, noise.perturb(poses[tag])) for tag in sorted(poses)]


class Tracker:
    """Stateful tracker bound to a world and a noise stream."""

    def __init__(self, world: SimWorld, noise: Optional[NoiseModel] = None,
                 rate_hz: float = DEFAULT_TRACKER_RATE_HZ):
        if not rate_hz > 0:
            raise ValueError("tracker rate must be positive")
        self.world = world
        self.noise = noise or NoiseModel()
        self.rate_hz = rate_hz
        self.frames = 0

    @property
    def period(self) -> float:
        return 1.0 / self.rate_hz

    def observe(self, t: Optional[float] = None):
        self.frames += 1
        return tracker_observe(self.world, self.world.time if t is None else t, self.noise)
