"""Scenario files: YAML description of a simulated session.

See ``docs/scenario.md`` for the schema. Ground-truth rigid offsets on the
flange (tag and coil) default to the URDF so simulator and scene agree;
a scenario can override them to model a mis-built setup.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

import numpy as np
import yaml

from ..igtl.devices import fiducial_label
from ..scene.config import SceneConfig, pose_from_mapping
from ..scene.tree import TransformTree
from ..spatial.registration import FiducialSet
from ..spatial.transform import RigidTransform
from .tracker import DEFAULT_TRACKER_RATE_HZ, NoiseModel
from .world import MotionProfile, SimRobotState, SimWorld, StylusSweep


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    seed: int
    scene: SceneConfig
    tracker_rate_hz: float
    sigma_translation: float
    sigma_rotation: float
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)
    base_dir: str = "."

    def noise(self, seed: Optional[int] = None) -> NoiseModel:
        return NoiseModel(self.sigma_translation, self.sigma_rotation,
                          self.seed if seed is None else seed)

    def build_world(self, tree: TransformTree) -> SimWorld:
        return _build_world(self.raw, tree)

    @property
    def fiducial_labels(self):
        return list(_fiducials(self.raw).labels)


def _vec(value, n=3, what="vector") -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ScenarioError(f"{what} needs {n} numbers, got {value!r}")
    return arr


def _fiducials(raw: Mapping) -> FiducialSet:
    spec = raw.get("fiducials_image")
    if not spec:
        raise ScenarioError("scenario defines no image fiducials")
    if isinstance(spec, Mapping):
        items = list(spec.items())
        for i, (label, _) in enumerate(items):
            if label != fiducial_label(i):
                raise ScenarioError(
                    f"fiducial {i} is labelled {label!r}; POLYDATA ordering requires "
                    f"{fiducial_label(i)!r}")
    else:
        items = [(fiducial_label(i), p) for i, p in enumerate(spec)]
    # image fiducials travel as float32 POLYDATA; keep ground truth on that grid
    return FiducialSet("image", [(label, _vec(p, what=f"fiducial {label}").astype(np.float32)
                                  .astype(float)) for label, p in items])


def _build_world(raw: Mapping, tree: TransformTree) -> SimWorld:
    head = raw.get("head") or {}
    keyframes = head.get("keyframes")
    if keyframes:
        profile = MotionProfile([(float(k.get("t", 0.0)), pose_from_mapping(k)) for k in keyframes])
    else:
        profile = MotionProfile.static(pose_from_mapping(head.get("pose", {})))

    robot = raw.get("robot") or {}
    workspace = robot.get("workspace") or {}
    thresholds = robot.get("thresholds") or {}
    state = SimRobotState.at(
        pose_from_mapping(robot.get("initial_flange")),
        max_linear_speed=float(robot.get("max_linear_speed", 50.0)),
        max_angular_speed=float(robot.get("max_angular_speed", 0.5)),
        workspace_min=tuple(_vec(workspace.get("min", (-1000, -1000, -1000)), what="workspace min")),
        workspace_max=tuple(_vec(workspace.get("max", (1000, 1000, 1000)), what="workspace max")),
        translation_threshold=float(thresholds.get("translation", 0.5)),
        rotation_threshold=float(thresholds.get("rotation", 0.01)),
    )

    physical = raw.get("physical") or {}
    f_t_tag = (pose_from_mapping(physical["flange_to_tag"]) if "flange_to_tag" in physical
               else tree.relative_transform("flange", "coil_tag"))
    f_t_c = (pose_from_mapping(physical["flange_to_coil"]) if "flange_to_coil" in physical
             else tree.relative_transform("flange", "coil"))

    stylus = raw.get("stylus") or {}
    sweep = stylus.get("sweep") or {}
    occlusions = [(str(o["tag"]), float(o["start"]), float(o["end"]))
                  for o in raw.get("occlusions") or []]

    return SimWorld(
        head_profile=profile,
        base=pose_from_mapping(robot.get("base")),
        image_to_head=pose_from_mapping(raw.get("image_to_head")),
        fiducials_image=_fiducials(raw),
        flange_to_tag=f_t_tag,
        flange_to_coil=f_t_c,
        robot=state,
        stylus_tip=_vec(stylus.get("tip_offset", (0.0, 0.0, -100.0)), what="stylus tip_offset"),
        pivot_point=_vec(stylus.get("pivot_point", (0.0, 0.0, 0.0)), what="stylus pivot_point"),
        sweep=StylusSweep(math.radians(float(sweep.get("cone_deg", 30.0))),
                          bool(sweep.get("spin", True))),
        stylus_park=pose_from_mapping(stylus.get("park")),
        occlusions=occlusions,
    )


def load_scenario(path, urdf_path: Optional[str] = None, seed: Optional[int] = None) -> Scenario:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"scenario not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_mapping(raw, os.path.dirname(os.path.abspath(path)), urdf_path, seed)


def scenario_from_mapping(raw: Mapping, base_dir: str = ".", urdf_path: Optional[str] = None,
                          seed: Optional[int] = None) -> Scenario:
    if not isinstance(raw, Mapping):
        raise ScenarioError("scenario must be a mapping")
    scene = SceneConfig.from_mapping(raw.get("scene") or {}, base_dir, urdf_path)
    tracker = raw.get("tracker") or {}
    scenario = Scenario(
        name=str(raw.get("name", "scenario")),
        seed=int(raw.get("seed", 0) if seed is None else seed),
        scene=scene,
        tracker_rate_hz=float(tracker.get("rate_hz", DEFAULT_TRACKER_RATE_HZ)),
        sigma_translation=float(tracker.get("sigma_translation", 0.0)),
        sigma_rotation=float(tracker.get("sigma_rotation", 0.0)),
        raw=dict(raw),
        base_dir=base_dir,
    )
    _fiducials(raw)
    return scenario
