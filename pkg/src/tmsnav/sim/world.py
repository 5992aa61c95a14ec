"""Ground-truth world for the simulated physical layer.

Frames: W is the tracker (camera) frame, H the head tag, I the MRI image,
B the robot base, F the flange, S the stylus tag.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..spatial.registration import FiducialSet
from ..spatial.transform import (
    RigidTransform,
    apply,
    compose,
    interpolate_pose,
    rotation_distance,
)

HEAD_TAG = "head"
STYLUS_TAG = "stylus"
COIL_TAG = "coil_tag"


class MotionProfile:
    """Piecewise-linear pose script over time.

    Keyframes sharing a timestamp produce a step: before that instant the
    earlier pose applies, from it onward the later one.
    """

    def __init__(self, keyframes: Sequence[Tuple[float, RigidTransform]]):
        if not keyframes:
            raise ValueError("a motion profile needs at least one keyframe")
        times = [float(t) for t, _ in keyframes]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be non-decreasing")
        self.times = times
        self.poses = [p for _, p in keyframes]

    @classmethod
    def static(cls, pose: RigidTransform) -> "MotionProfile":
        return cls([(0.0, pose)])

    def pose_at(self, t: float) -> RigidTransform:
        i = bisect.bisect_right(self.times, t)
        if i == 0:
            return self.poses[0]
        if i == len(self.times):
            return self.poses[-1]
        t0, t1 = self.times[i - 1], self.times[i]
        return interpolate_pose(self.poses[i - 1], self.poses[i], (t - t0) / (t1 - t0))


@dataclass(frozen=True)
class SimRobotState:
    """Cartesian pose servo; poses are B_T_F (mm, rad)."""

    current: RigidTransform
    command: RigidTransform
    max_linear_speed: float = 50.0
    max_angular_speed: float = 0.5
    status: str = "idle"
    workspace_min: Tuple[float, float, float] = (-1000.0, -1000.0, -1000.0)
    workspace_max: Tuple[float, float, float] = (1000.0, 1000.0, 1000.0)
    translation_threshold: float = 0.5
    rotation_threshold: float = 0.01
    fault_reason: str = ""

    @classmethod
    def at(cls, pose: RigidTransform, **kwargs) -> "SimRobotState":
        return cls(current=pose, command=pose, **kwargs)

    def pose_error(self) -> Tuple[float, float]:
        return (float(np.linalg.norm(self.command.translation - self.current.translation)),
                rotation_distance(self.current, self.command))

    def within_thresholds(self) -> bool:
        d, a = self.pose_error()
        return d < self.translation_threshold and a < self.rotation_threshold

    def in_workspace(self, pose: RigidTransform) -> bool:
        p = pose.translation
        return bool(np.all(p >= np.asarray(self.workspace_min)) and
                    np.all(p <= np.asarray(self.workspace_max)))


def robot_command(state: SimRobotState, target: RigidTransform) -> SimRobotState:
    if not state.in_workspace(target):
        p = ", ".join(f"{v:.1f}" for v in target.translation)
        return replace(state, status="fault",
                       fault_reason=f"target ({p}) mm is outside the workspace box")
    moved = replace(state, command=target, fault_reason="")
    return replace(moved, status="converged" if moved.within_thresholds() else "moving")


def step_robot(state: SimRobotState, dt: float) -> SimRobotState:
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    if state.status in ("idle", "fault"):
        return state
    dist, angle = state.pose_error()
    max_d = state.max_linear_speed * dt
    max_a = state.max_angular_speed * dt
    if dist <= max_d and angle <= max_a:
        s = 1.0
    else:
        s = min(max_d / dist if dist > 0 else 1.0, max_a / angle if angle > 0 else 1.0)
    nxt = replace(state, current=interpolate_pose(state.current, state.command, s))
    return replace(nxt, status="converged" if nxt.within_thresholds() else "moving")


@dataclass
class StylusSweep:
    """Orientation script for pivoting the stylus about a fixed tip."""

    cone: float = math.radians(30.0)
    spin: bool = True

    def rotation(self, s: float) -> RigidTransform:
        if not self.spin and self.cone == 0.0:
            return RigidTransform.identity()
        yaw = 2 * math.pi * 0.6 * s if self.spin else 0.0
        tilt = self.cone * (0.6 + 0.4 * math.sin(2 * math.pi * 1.3 * s))
        roll = 0.8 * math.sin(2 * math.pi * 0.9 * s) if self.spin else 0.0
        rz = RigidTransform.from_axis_angle((0, 0, 1), yaw)
        rx = RigidTransform.from_axis_angle((1, 0, 0), tilt)
        rr = RigidTransform.from_axis_angle((0, 0, 1), roll)
        return compose(compose(rz, rx), rr)


@dataclass
class SimWorld:
    head_profile: MotionProfile
    base: RigidTransform                      # W_T_B
    image_to_head: RigidTransform             # H_T_I
    fiducials_image: FiducialSet              # in I
    flange_to_tag: RigidTransform             # F_T_tag
    flange_to_coil: RigidTransform            # F_T_C
    robot: SimRobotState
    stylus_tip: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -100.0]))
    pivot_point: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0]))
    sweep: StylusSweep = field(default_factory=StylusSweep)
    stylus_park: RigidTransform = field(default_factory=RigidTransform.identity)
    occlusions: List[Tuple[str, float, float]] = field(default_factory=list)
    hidden: set = field(default_factory=set)
    time: float = 0.0
    stylus_mode: Tuple = ("park",)

    def __post_init__(self):
        self.stylus_tip = np.asarray(self.stylus_tip, dtype=float)
        self.pivot_point = np.asarray(self.pivot_point, dtype=float)

    # -- ground truth --------------------------------------------------------

    def head_pose(self, t: Optional[float] = None) -> RigidTransform:
        return self.head_profile.pose_at(self.time if t is None else t)

    @property
    def fiducials_head(self) -> FiducialSet:
        return FiducialSet("head", [(label, apply(self.image_to_head, p))
                                    for label, p in self.fiducials_image.points])

    def coil_pose(self) -> RigidTransform:
        """W_T_C from the robot's actual flange pose."""
        return compose(compose(self.base, self.robot.current), self.flange_to_coil)

    def stylus_pose(self, t: Optional[float] = None) -> RigidTransform:
        t = self.time if t is None else t
        mode = self.stylus_mode[0]
        if mode == "pivot":
            rot = self.sweep.rotation(t - self.stylus_mode[1])
            tip_world = self.pivot_point
        elif mode == "touch":
            label = self.stylus_mode[1]
            lookup = dict(self.fiducials_head.points)
            if label not in lookup:
                raise KeyError(f"scenario has no fiducial {label!r}")
            index = self.fiducials_head.labels.index(label)
            rot = RigidTransform.from_rpy(math.radians(15.0), math.radians(-10.0 + 5.0 * index),
                                          math.radians(40.0 * index))
            tip_world = apply(self.head_pose(t), lookup[label])
        else:
            return self.stylus_park
        return RigidTransform(rot.rotation, tip_world - apply(rot, self.stylus_tip))

    def tag_poses(self, t: Optional[float] = None) -> Dict[str, RigidTransform]:
        t = self.time if t is None else t
        poses = {
            HEAD_TAG: self.head_pose(t),
            STYLUS_TAG: self.stylus_pose(t),
            COIL_TAG: compose(compose(self.base, self.robot.current), self.flange_to_tag),
        }
        return {tag: pose for tag, pose in poses.items() if self.visible(tag, t)}

    def visible(self, tag: str, t: float) -> bool:
        if tag in self.hidden:
            return False
        return not any(name == tag and start <= t < end for name, start, end in self.occlusions)

    # -- scripted stylus handling ---------------------------------------------

    def start_pivot_sweep(self):
        self.stylus_mode = ("pivot", self.time)

    def touch_fiducial(self, label: str):
        self.stylus_mode = ("touch", label)

    def park_stylus(self):
        self.stylus_mode = ("park",)


def sim_step(world: SimWorld, robot: SimRobotState, dt: float) -> SimRobotState:
    """Advance time by ``dt``; returns the stepped robot (also stored on ``world``)."""
    robot = step_robot(robot, dt)
    world.robot = robot
    world.time += dt
    return robot
